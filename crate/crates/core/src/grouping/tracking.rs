use super::hungarian::solve_assignment;

/// A plane from the previous keyframe: its id and sorted member keys.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TrackedPlane {
    pub id: i32,
    pub members: Vec<u64>,
}

impl TrackedPlane {
    pub fn new(id: i32, mut members: Vec<u64>) -> Self {
        members.sort_unstable();
        members.dedup();
        Self { id, members }
    }
}

/// Outcome of matching current planes against previous ones.
#[derive(Clone, Debug, PartialEq)]
pub struct Tracking {
    /// Id assigned to each current plane.
    pub ids: Vec<i32>,
    /// Index of the previous plane each current plane continues, if any.
    pub matched: Vec<Option<usize>>,
    /// Optimal assignment cost (sum of `1 - IoU` over matched pairs).
    pub cost: f64,
    /// First id not handed out yet.
    pub next_id: i32,
}

/// Intersection over union of two sorted, deduplicated key sets.
pub(crate) fn iou(a: &[u64], b: &[u64]) -> f64 {
    let (mut i, mut j, mut inter) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Matches current planes (given as member-key sets) to previous planes by
/// minimum total `1 - IoU`. Matched planes with some overlap inherit the
/// previous id; the rest receive fresh ids starting at `next_id` (or past
/// the largest previous id, whichever is larger).
pub fn track_planes(previous: &[TrackedPlane], current: &[Vec<u64>], next_id: i32) -> Tracking {
    let mut sorted: Vec<Vec<u64>> = current.to_vec();
    for s in &mut sorted {
        s.sort_unstable();
        s.dedup();
    }
    let overlap: Vec<Vec<f64>> = sorted
        .iter()
        .map(|c| previous.iter().map(|p| iou(c, &p.members)).collect())
        .collect();
    let cost: Vec<Vec<f64>> = overlap
        .iter()
        .map(|row| row.iter().map(|x| 1.0 - x).collect())
        .collect();
    let assignment = solve_assignment(&cost).expect("IoU costs are finite and rectangular");

    let mut next_id = previous
        .iter()
        .map(|p| p.id + 1)
        .max()
        .unwrap_or(0)
        .max(next_id);
    let mut ids = Vec::with_capacity(current.len());
    let mut matched = Vec::with_capacity(current.len());
    for (c, col) in assignment.row_to_col.iter().enumerate() {
        match col {
            Some(p) if overlap[c][*p] > 0.0 => {
                ids.push(previous[*p].id);
                matched.push(Some(*p));
            }
            _ => {
                ids.push(next_id);
                next_id += 1;
                matched.push(None);
            }
        }
    }
    Tracking {
        ids,
        matched,
        cost: assignment.cost,
        next_id,
    }
}

/// Carries plane ids from keyframe to keyframe.
#[derive(Clone, Debug, Default)]
pub struct PlaneTracker {
    previous: Vec<TrackedPlane>,
    next_id: i32,
}

impl PlaneTracker {
    pub fn new() -> Self {
        Self::default()
    }

    /// Assigns persistent ids to the current planes and remembers them.
    pub fn update(&mut self, current: &[Vec<u64>]) -> Vec<i32> {
        let t = track_planes(&self.previous, current, self.next_id);
        self.next_id = t.next_id;
        self.previous = current
            .iter()
            .zip(&t.ids)
            .map(|(m, &id)| TrackedPlane::new(id, m.clone()))
            .collect();
        t.ids
    }

    pub fn planes(&self) -> &[TrackedPlane] {
        &self.previous
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iou_values() {
        assert_eq!(iou(&[1, 2, 3], &[2, 3, 4]), 0.5);
        assert_eq!(iou(&[], &[]), 0.0);
        assert_eq!(iou(&[1], &[1]), 1.0);
    }

    #[test]
    fn identical_sets_keep_ids() {
        let prev = vec![
            TrackedPlane::new(4, vec![1, 2, 3]),
            TrackedPlane::new(9, vec![10, 11]),
        ];
        let t = track_planes(&prev, &[vec![10, 11], vec![3, 2, 1]], 0);
        assert_eq!(t.ids, vec![9, 4]);
        assert_eq!(t.cost, 0.0);
        assert_eq!(t.next_id, 10);
    }

    #[test]
    fn empty_previous_gives_fresh_ids() {
        let t = track_planes(&[], &[vec![1], vec![2]], 5);
        assert_eq!(t.ids, vec![5, 6]);
        assert_eq!(t.next_id, 7);
    }

    #[test]
    fn disjoint_planes_are_not_matched() {
        let prev = vec![TrackedPlane::new(0, vec![1, 2])];
        let t = track_planes(&prev, &[vec![7, 8]], 1);
        assert_eq!(t.ids, vec![1]);
        assert_eq!(t.matched, vec![None]);
    }

    #[test]
    fn new_plane_keeps_existing_ids() {
        let mut tracker = PlaneTracker::new();
        assert_eq!(tracker.update(&[vec![1, 2, 3], vec![4, 5]]), vec![0, 1]);
        let ids = tracker.update(&[vec![4, 5, 6], vec![20, 21], vec![1, 2, 3, 9]]);
        assert_eq!(ids, vec![1, 2, 0]);
        // a retired id is never reused
        let ids = tracker.update(&[vec![30]]);
        assert_eq!(ids, vec![3]);
    }
}
