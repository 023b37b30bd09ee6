//! Allen-style relations between composition instances and the transition
//! matrix between patterns.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::event::Timestamp;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AllenRelation {
    Before,
    Overlap,
    Equal,
    StartBy,
    Finish,
    Meet,
    During,
}

impl AllenRelation {
    pub const ALL: [AllenRelation; 7] = [
        AllenRelation::Before,
        AllenRelation::Overlap,
        AllenRelation::Equal,
        AllenRelation::StartBy,
        AllenRelation::Finish,
        AllenRelation::Meet,
        AllenRelation::During,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AllenRelation::Before => "before",
            AllenRelation::Overlap => "overlap",
            AllenRelation::Equal => "equal",
            AllenRelation::StartBy => "start_by",
            AllenRelation::Finish => "finish",
            AllenRelation::Meet => "meet",
            AllenRelation::During => "during",
        }
    }

    /// Whether `i` stands in this relation to `j`.
    pub fn holds(self, i: (Timestamp, Timestamp), j: (Timestamp, Timestamp)) -> bool {
        let (st_i, et_i) = i;
        let (st_j, et_j) = j;
        match self {
            AllenRelation::Before => et_i < st_j,
            AllenRelation::Overlap => st_i < st_j && st_j < et_i && et_i < et_j,
            AllenRelation::Equal => st_i == st_j && et_i == et_j,
            AllenRelation::StartBy => st_i == st_j && et_i < et_j,
            AllenRelation::Finish => st_i > st_j && et_i == et_j,
            AllenRelation::Meet => et_i == st_j,
            // A zero-length `i` strictly inside `j` also counts as during.
            AllenRelation::During => st_j < st_i && st_i <= et_i && et_i < et_j,
        }
    }
}

impl fmt::Display for AllenRelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Outcome of [`classify`]. When `swapped` is set, the relation holds from
/// the second interval to the first.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Classification {
    pub relation: AllenRelation,
    pub swapped: bool,
}

/// Checked in this order; the predicates are disjoint except on degenerate
/// zero-length intervals, where the earlier entry wins.
const PRECEDENCE: [AllenRelation; 7] = [
    AllenRelation::Equal,
    AllenRelation::StartBy,
    AllenRelation::Finish,
    AllenRelation::Meet,
    AllenRelation::Before,
    AllenRelation::During,
    AllenRelation::Overlap,
];

fn classify_direct(i: (Timestamp, Timestamp), j: (Timestamp, Timestamp)) -> Option<AllenRelation> {
    PRECEDENCE.into_iter().find(|r| r.holds(i, j))
}

/// Relation of interval `i` to interval `j`, swapping roles when no
/// relation holds in the given direction.
pub fn classify(i: (Timestamp, Timestamp), j: (Timestamp, Timestamp)) -> Classification {
    if let Some(relation) = classify_direct(i, j) {
        return Classification {
            relation,
            swapped: false,
        };
    }
    let relation = classify_direct(j, i).expect("every interval pair is related in one direction");
    Classification {
        relation,
        swapped: true,
    }
}

/// An instance reduced to its sequence and time span.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceSpan {
    pub sid: u32,
    pub start: Timestamp,
    pub end: Timestamp,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MatrixCell {
    pub tran_pro: f64,
    /// Share of the source's instances per relation; sums to `tran_pro`.
    /// A relation found with roles swapped is stored under its own name in
    /// this same cell.
    pub relations: BTreeMap<AllenRelation, f64>,
}

impl MatrixCell {
    /// Most probable relation, ties by declaration order.
    pub fn dominant_relation(&self) -> Option<AllenRelation> {
        self.relations
            .iter()
            .fold(None, |best: Option<(AllenRelation, f64)>, (&r, &p)| match best {
                Some((_, bp)) if bp >= p => best,
                _ => Some((r, p)),
            })
            .map(|(r, _)| r)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TemporalMatrix {
    pub cells: Vec<Vec<MatrixCell>>,
}

impl TemporalMatrix {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cell(&self, from: usize, to: usize) -> &MatrixCell {
        &self.cells[from][to]
    }

    /// Fraction of off-diagonal cells with a nonzero transition.
    pub fn density(&self) -> f64 {
        let n = self.len();
        if n < 2 {
            return 0.0;
        }
        let nonzero = self
            .cells
            .iter()
            .flatten()
            .filter(|c| c.tran_pro > 0.0)
            .count();
        nonzero as f64 / (n * (n - 1)) as f64
    }
}

/// Builds the transition matrix between patterns.
///
/// For each instance of pattern `i`, the earliest instance of pattern `j`
/// in the same sequence that starts no earlier counts as one transit.
/// `tran_pro = transits / instances of i`; the relation of each transit is
/// accumulated with the same normalization. The diagonal stays empty.
pub fn build_matrix(instances: &[Vec<InstanceSpan>]) -> TemporalMatrix {
    let n = instances.len();
    // Per pattern, per sequence: spans sorted by (start, end).
    let index: Vec<HashMap<u32, Vec<(Timestamp, Timestamp)>>> = instances
        .iter()
        .map(|spans| {
            let mut by_sid: HashMap<u32, Vec<(Timestamp, Timestamp)>> = HashMap::new();
            for s in spans {
                by_sid.entry(s.sid).or_default().push((s.start, s.end));
            }
            for v in by_sid.values_mut() {
                v.sort_unstable();
            }
            by_sid
        })
        .collect();

    let cells = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j || instances[i].is_empty() {
                        return MatrixCell::default();
                    }
                    let total = instances[i].len() as f64;
                    let mut transits = 0usize;
                    let mut counts: BTreeMap<AllenRelation, usize> = BTreeMap::new();
                    for src in &instances[i] {
                        let Some(targets) = index[j].get(&src.sid) else {
                            continue;
                        };
                        let k = targets.partition_point(|t| t.0 < src.start);
                        if let Some(&target) = targets.get(k) {
                            transits += 1;
                            let c = classify((src.start, src.end), target);
                            *counts.entry(c.relation).or_default() += 1;
                        }
                    }
                    MatrixCell {
                        tran_pro: transits as f64 / total,
                        relations: counts
                            .into_iter()
                            .map(|(r, c)| (r, c as f64 / total))
                            .collect(),
                    }
                })
                .collect()
        })
        .collect();
    TemporalMatrix { cells }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn span(sid: u32, start: i64, end: i64) -> InstanceSpan {
        InstanceSpan { sid, start, end }
    }

    #[test]
    fn classify_examples() {
        assert_eq!(classify((1, 2), (3, 4)).relation, AllenRelation::Before);
        assert_eq!(classify((1, 4), (1, 4)).relation, AllenRelation::Equal);
        assert_eq!(classify((1, 3), (3, 5)).relation, AllenRelation::Meet);
        assert_eq!(classify((1, 4), (2, 6)).relation, AllenRelation::Overlap);
        assert_eq!(classify((2, 3), (1, 4)).relation, AllenRelation::During);
        assert_eq!(classify((1, 3), (1, 5)).relation, AllenRelation::StartBy);
        assert_eq!(classify((3, 5), (1, 5)).relation, AllenRelation::Finish);
    }

    #[test]
    fn classify_swaps_uncovered_orders() {
        let c = classify((1, 5), (1, 3));
        assert_eq!(c, Classification { relation: AllenRelation::StartBy, swapped: true });
        let c = classify((1, 9), (2, 3));
        assert_eq!(c, Classification { relation: AllenRelation::During, swapped: true });
        let c = classify((5, 6), (1, 2));
        assert_eq!(c, Classification { relation: AllenRelation::Before, swapped: true });
    }

    #[test]
    fn point_inside_interval_is_during() {
        assert_eq!(classify((2, 2), (1, 4)).relation, AllenRelation::During);
        let c = classify((1, 4), (2, 2));
        assert_eq!(c, Classification { relation: AllenRelation::During, swapped: true });
    }

    #[test]
    fn half_of_instances_transit() {
        let a = vec![span(0, 0, 10), span(1, 0, 10), span(2, 0, 10), span(3, 0, 10)];
        let b = vec![span(0, 20, 30), span(1, 20, 30)];
        let m = build_matrix(&[a, b]);
        assert_eq!(m.cell(0, 1).tran_pro, 0.5);
        assert_eq!(m.cell(0, 1).relations[&AllenRelation::Before], 0.5);
        assert_eq!(m.cell(1, 0).tran_pro, 0.0);
        assert_eq!(m.cell(0, 0), &MatrixCell::default());
    }

    #[test]
    fn earliest_target_only_counted_once() {
        let a = vec![span(0, 0, 10)];
        let b = vec![span(0, 40, 50), span(0, 5, 20), span(0, 30, 35)];
        let m = build_matrix(&[a, b]);
        assert_eq!(m.cell(0, 1).tran_pro, 1.0);
        assert_eq!(m.cell(0, 1).relations.len(), 1);
        assert_eq!(m.cell(0, 1).relations[&AllenRelation::Overlap], 1.0);
    }

    #[test]
    fn mixed_relations_sum_to_tran_pro() {
        let a = vec![span(0, 0, 10), span(1, 0, 10), span(2, 0, 10), span(3, 0, 10)];
        let b = vec![span(0, 20, 30), span(1, 5, 8), span(2, 5, 12)];
        let m = build_matrix(&[a, b]);
        let cell = m.cell(0, 1);
        assert_eq!(cell.tran_pro, 0.75);
        let sum: f64 = cell.relations.values().sum();
        assert!((sum - cell.tran_pro).abs() < 1e-12);
        assert_eq!(cell.relations[&AllenRelation::During], 0.25);
        assert_eq!(cell.dominant_relation(), Some(AllenRelation::Before));
    }

    #[test]
    fn co_starting_target_counts() {
        let m = build_matrix(&[vec![span(0, 5, 10)], vec![span(0, 5, 10)]]);
        assert_eq!(m.cell(0, 1).relations[&AllenRelation::Equal], 1.0);
        assert_eq!(m.cell(1, 0).relations[&AllenRelation::Equal], 1.0);
    }
}
