use serde::{Deserialize, Serialize};

use crate::geometry::Angulation;

/// One of the eight clinical projection groups A-H.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GroupId(pub char);

impl std::fmt::Display for GroupId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

fn steps(from: i32, to: i32) -> Vec<f64> {
    (from..=to).step_by(5).map(f64::from).collect()
}

fn grid(group: char, alphas: &[f64], betas: &[f64], out: &mut Vec<(GroupId, Angulation)>) {
    for &a in alphas {
        for &b in betas {
            out.push((GroupId(group), Angulation::new(a, b).expect("group angulations are in range")));
        }
    }
}

/// All clinical angulations in 5 degree increments. LAO and cranial are
/// positive; RAO and caudal negative; lateral views sit at alpha = +-90.
pub fn enumerate_projection_groups() -> Vec<(GroupId, Angulation)> {
    let neg = |v: Vec<f64>| v.into_iter().map(|x| -x).collect::<Vec<_>>();
    let mut out = Vec::with_capacity(63);
    // A: LAO 40-50, caudal 25-40
    grid('A', &steps(40, 50), &neg(steps(25, 40)), &mut out);
    // B: RAO 5-15, caudal 30
    grid('B', &neg(steps(5, 15)), &[-30.0], &mut out);
    // C: RAO 30-45, caudal 30-40
    grid('C', &neg(steps(30, 45)), &neg(steps(30, 40)), &mut out);
    // D: RAO 5-15, cranial 35-40
    grid('D', &neg(steps(5, 15)), &steps(35, 40), &mut out);
    // E: LAO 30-45, cranial 25-35
    grid('E', &steps(30, 45), &steps(25, 35), &mut out);
    // F: left and right lateral, cranial 10-30
    grid('F', &[90.0, -90.0], &steps(10, 30), &mut out);
    // G: LAO 45-60
    grid('G', &steps(45, 60), &[0.0], &mut out);
    // H: RAO 30-45
    grid('H', &neg(steps(30, 45)), &[0.0], &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::angle_between_angulations;

    fn count(g: char) -> usize {
        enumerate_projection_groups().iter().filter(|(id, _)| id.0 == g).count()
    }

    #[test]
    fn sixty_three_views() {
        assert_eq!(enumerate_projection_groups().len(), 63);
        let counts: Vec<usize> = "ABCDEFGH".chars().map(count).collect();
        assert_eq!(counts, vec![12, 3, 12, 6, 12, 10, 4, 4]);
    }

    #[test]
    fn group_g_and_b() {
        let all = enumerate_projection_groups();
        let g: Vec<_> = all.iter().filter(|(id, _)| id.0 == 'G').map(|(_, a)| (a.alpha_deg, a.beta_deg)).collect();
        assert_eq!(g, vec![(45.0, 0.0), (50.0, 0.0), (55.0, 0.0), (60.0, 0.0)]);
        let b: Vec<_> = all.iter().filter(|(id, _)| id.0 == 'B').map(|(_, a)| *a).collect();
        assert_eq!(b.len(), 3);
        assert!(b.iter().all(|a| a.beta_deg == -30.0 && a.alpha_deg < 0.0));
    }

    #[test]
    fn angulations_distinct() {
        let all = enumerate_projection_groups();
        for (i, (_, a)) in all.iter().enumerate() {
            for (_, b) in &all[i + 1..] {
                assert!(angle_between_angulations(*a, *b) > 1.0);
            }
        }
    }
}
