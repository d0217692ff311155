use crate::data::Trajectory;
use crate::grid::Point;

/// `frames` are `len` consecutive points of a trajectory starting at
/// `offset` (0-based); `target` is the point right after them.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SegmentWindow {
    pub trajectory: usize,
    pub offset: usize,
    pub frames: Vec<Point>,
    pub target: Point,
}

/// Every fully in-range window of length `s`: `len - s` of them, or none when
/// the trajectory is too short.
pub fn windows(trajectory: &Trajectory, index: usize, s: usize) -> Vec<SegmentWindow> {
    let pts = &trajectory.points;
    if s == 0 || pts.len() < s + 1 {
        return Vec::new();
    }
    (0..pts.len() - s)
        .map(|t| SegmentWindow {
            trajectory: index,
            offset: t,
            frames: pts[t..t + s].to_vec(),
            target: pts[t + s],
        })
        .collect()
}

#[derive(Clone, Debug, Default)]
pub struct WindowSet {
    pub windows: Vec<SegmentWindow>,
    /// Trajectories shorter than `s + 1` points.
    pub skipped: usize,
}

pub fn collect_windows(trajectories: &[Trajectory], s: usize) -> WindowSet {
    let mut set = WindowSet::default();
    for (i, t) in trajectories.iter().enumerate() {
        let w = windows(t, i, s);
        if w.is_empty() {
            set.skipped += 1;
        }
        set.windows.extend(w);
    }
    if set.skipped > 0 {
        log::warn!("skipped {} trajectories shorter than {} points", set.skipped, s + 1);
    }
    set
}
