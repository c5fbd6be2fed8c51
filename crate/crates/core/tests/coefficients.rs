use kirchhoff::constants::{COEF_BOUND_D1, COEF_BOUND_D2};
use kirchhoff::normal_form::coeffs::{phi5_coefficient, Family};
use rand::{Rng, SeedableRng};

const GOLDEN: &str = include_str!("data/phi5_golden.txt");

#[test]
fn matches_exact_reference_values() {
    let mut seen = 0;
    for line in GOLDEN.lines() {
        let f: Vec<&str> = line.split_whitespace().collect();
        let fam: Family = f[0].parse().unwrap();
        let (nj, nl, nk): (u64, u64, u64) = (f[1].parse().unwrap(), f[2].parse().unwrap(), f[3].parse().unwrap());
        let want: f64 = f[4].parse().unwrap();
        let got = phi5_coefficient(fam, nj, nl, nk);
        let tol = 1e-13 * want.abs().max(1e-3);
        assert!((got - want).abs() <= tol, "{line}: got {got:e}");
        seen += 1;
    }
    assert_eq!(seen, 6 * 6 * 6 * 8);
}

#[test]
fn vanishing_families() {
    for n in [1, 2, 4, 8, 9, 18] {
        for m in [1, 2, 4, 8, 9, 18] {
            assert_eq!(phi5_coefficient(Family::B11, n, m, 9), 0.0);
            assert_eq!(phi5_coefficient(Family::D11, n, m, 9), 0.0);
        }
    }
}

#[test]
fn bound_d1() {
    let mut worst = 0.0f64;
    for j in 1..=40u64 {
        for l in 1..=40u64 {
            let scale = (j * j * l * l) as f64;
            for k in 1..=40u64 {
                for fam in Family::ALL {
                    let c = phi5_coefficient(fam, j * j, l * l, k * k);
                    worst = worst.max(c.abs() / scale);
                }
            }
        }
    }
    assert!(worst <= COEF_BOUND_D1, "{worst}");
}

#[test]
fn bound_d2() {
    let keys: Vec<u64> = (1..=400u64).filter(|&n| (0..=20u64).any(|a| (0..=a).any(|b| a * a + b * b == n))).collect();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..200_000 {
        let pick = |r: &mut rand_chacha::ChaCha8Rng| keys[r.gen_range(0..keys.len())];
        let (nj, nl, nk) = (pick(&mut rng), pick(&mut rng), pick(&mut rng));
        let (j2, l2) = (nj as f64, nl as f64);
        let scale = j2 * j2 * l2 + j2 * l2 * l2;
        for fam in Family::ALL {
            worst = worst.max(phi5_coefficient(fam, nj, nl, nk).abs() / scale);
        }
    }
    assert!(worst <= COEF_BOUND_D2, "{worst}");
}
