//! Classical multidimensional scaling of a model-distance matrix into the
//! plane, and Procrustes comparison of two planar configurations.

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EmbedError {
    #[error("need at least {min} points, got {found}")]
    TooFewPoints { min: usize, found: usize },
    #[error("expected {expected} entries, found {found}")]
    Shape { expected: usize, found: usize },
    #[error("distance ({i},{j}) = {value} is negative or not finite")]
    BadDistance { i: usize, j: usize, value: f64 },
    #[error("distance matrix is not symmetric at ({i},{j})")]
    Asymmetric { i: usize, j: usize },
    #[error("diagonal entry {i} is {value}, expected 0")]
    NonZeroDiagonal { i: usize, value: f64 },
    #[error("{labels} labels for {m} points")]
    LabelCount { labels: usize, m: usize },
}

const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;
const SYMMETRY_TOL: f64 = 1e-9;

/// Eigen-decomposition of a symmetric `m × m` matrix (row-major) by cyclic
/// Jacobi rotations. Eigenvalues are returned in descending order; column
/// `k` of the row-major `vectors` is the eigenvector for `values[k]`.
pub fn jacobi_eigen(a: &[f64], m: usize) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(a.len(), m * m);
    let mut a = a.to_vec();
    let mut v = vec![0.0; m * m];
    for i in 0..m {
        v[i * m + i] = 1.0;
    }
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..m)
            .flat_map(|p| (p + 1..m).map(move |q| (p, q)))
            .map(|(p, q)| a[p * m + q] * a[p * m + q])
            .sum::<f64>()
            .sqrt();
        if off <= JACOBI_TOL * scale {
            break;
        }
        for p in 0..m {
            for q in p + 1..m {
                let apq = a[p * m + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * m + q] - a[p * m + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..m {
                    let akp = a[k * m + p];
                    let akq = a[k * m + q];
                    a[k * m + p] = c * akp - s * akq;
                    a[k * m + q] = s * akp + c * akq;
                }
                for k in 0..m {
                    let apk = a[p * m + k];
                    let aqk = a[q * m + k];
                    a[p * m + k] = c * apk - s * aqk;
                    a[q * m + k] = s * apk + c * aqk;
                }
                for k in 0..m {
                    let vkp = v[k * m + p];
                    let vkq = v[k * m + q];
                    v[k * m + p] = c * vkp - s * vkq;
                    v[k * m + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&x, &y| a[y * m + y].total_cmp(&a[x * m + x]).then(x.cmp(&y)));
    let values = order.iter().map(|&k| a[k * m + k]).collect();
    let mut vectors = vec![0.0; m * m];
    for (col, &k) in order.iter().enumerate() {
        for r in 0..m {
            vectors[r * m + col] = v[r * m + k];
        }
    }
    (values, vectors)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbedCoords {
    pub labels: Vec<String>,
    pub coords: Vec<[f64; 2]>,
    /// All eigenvalues of the double-centered matrix, descending.
    pub eigenvalues: Vec<f64>,
    /// `‖D − D̂‖_F / ‖D‖_F`, zero when `D` is zero.
    pub stress: f64,
    /// Sum of negative eigenvalue magnitudes over the sum of all magnitudes.
    pub negative_fraction: f64,
}

fn validate_distances(d: &[f64], m: usize) -> Result<(), EmbedError> {
    if d.len() != m * m {
        return Err(EmbedError::Shape {
            expected: m * m,
            found: d.len(),
        });
    }
    for i in 0..m {
        for j in 0..m {
            let x = d[i * m + j];
            if !x.is_finite() || x < 0.0 {
                return Err(EmbedError::BadDistance { i, j, value: x });
            }
        }
        if d[i * m + i] > SYMMETRY_TOL {
            return Err(EmbedError::NonZeroDiagonal {
                i,
                value: d[i * m + i],
            });
        }
        for j in i + 1..m {
            let (a, b) = (d[i * m + j], d[j * m + i]);
            if (a - b).abs() > SYMMETRY_TOL * a.abs().max(b.abs()).max(1.0) {
                return Err(EmbedError::Asymmetric { i, j });
            }
        }
    }
    Ok(())
}

fn center(points: &mut [[f64; 2]]) {
    let m = points.len() as f64;
    for k in 0..2 {
        let mean = points.iter().map(|p| p[k]).sum::<f64>() / m;
        points.iter_mut().for_each(|p| p[k] -= mean);
    }
}

/// Two-dimensional classical MDS of a symmetric distance matrix.
///
/// Each axis is oriented so that its first entry with magnitude above
/// `1e-12` is positive.
pub fn classical_mds(distances: &[f64], labels: &[String]) -> Result<EmbedCoords, EmbedError> {
    let m = labels.len();
    if m < 3 {
        return Err(EmbedError::TooFewPoints { min: 3, found: m });
    }
    validate_distances(distances, m)?;

    // B = -1/2 J D² J, with D symmetrised.
    let sq: Vec<f64> = (0..m * m)
        .map(|k| {
            let (i, j) = (k / m, k % m);
            let x = 0.5 * (distances[i * m + j] + distances[j * m + i]);
            if i == j {
                0.0
            } else {
                x * x
            }
        })
        .collect();
    let row_mean: Vec<f64> = (0..m).map(|i| sq[i * m..(i + 1) * m].iter().sum::<f64>() / m as f64).collect();
    let grand = row_mean.iter().sum::<f64>() / m as f64;
    let b: Vec<f64> = (0..m * m)
        .map(|k| {
            let (i, j) = (k / m, k % m);
            -0.5 * (sq[k] - row_mean[i] - row_mean[j] + grand)
        })
        .collect();

    let (values, vectors) = jacobi_eigen(&b, m);
    let mut coords = vec![[0.0; 2]; m];
    for (axis, &lambda) in values.iter().take(2).enumerate() {
        let s = lambda.max(0.0).sqrt();
        for (r, c) in coords.iter_mut().enumerate() {
            c[axis] = vectors[r * m + axis] * s;
        }
    }
    center(&mut coords);
    for axis in 0..2 {
        if let Some(first) = coords.iter().map(|c| c[axis]).find(|x| x.abs() > 1e-12) {
            if first < 0.0 {
                coords.iter_mut().for_each(|c| c[axis] = -c[axis]);
            }
        }
    }

    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..m {
        for j in 0..m {
            let dx = coords[i][0] - coords[j][0];
            let dy = coords[i][1] - coords[j][1];
            let fit = (dx * dx + dy * dy).sqrt();
            let d = distances[i * m + j];
            num += (d - fit) * (d - fit);
            den += d * d;
        }
    }
    let stress = if den == 0.0 { 0.0 } else { (num / den).sqrt() };
    let neg: f64 = values.iter().filter(|&&x| x < 0.0).map(|x| -x).sum();
    let all: f64 = values.iter().map(|x| x.abs()).sum();
    Ok(EmbedCoords {
        labels: labels.to_vec(),
        coords,
        eigenvalues: values,
        stress,
        negative_fraction: if all == 0.0 { 0.0 } else { neg / all },
    })
}

/// Root-mean-square point distance after optimally rotating or reflecting
/// `x` onto `y`, both centered first.
pub fn procrustes_error(x: &[[f64; 2]], y: &[[f64; 2]]) -> Result<f64, EmbedError> {
    if x.len() != y.len() {
        return Err(EmbedError::Shape {
            expected: x.len(),
            found: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(EmbedError::TooFewPoints {
            min: 2,
            found: x.len(),
        });
    }
    let mut x = x.to_vec();
    let mut y = y.to_vec();
    center(&mut x);
    center(&mut y);
    let (mut a, mut b, mut c, mut d) = (0.0, 0.0, 0.0, 0.0);
    for (p, q) in x.iter().zip(&y) {
        a += p[0] * q[0];
        b += p[0] * q[1];
        c += p[1] * q[0];
        d += p[1] * q[1];
    }
    // Apply the best map and sum residuals directly; the closed form
    // |x|² + |y|² - 2·trace cancels badly near a perfect fit.
    let rot = ((a + d).powi(2) + (b - c).powi(2)).sqrt();
    let refl = ((a - d).powi(2) + (b + c).powi(2)).sqrt();
    let map: [[f64; 2]; 2] = if rot >= refl {
        let t = (b - c).atan2(a + d);
        [[t.cos(), -t.sin()], [t.sin(), t.cos()]]
    } else {
        let t = (b + c).atan2(a - d);
        [[t.cos(), t.sin()], [t.sin(), -t.cos()]]
    };
    let residual: f64 = x
        .iter()
        .zip(&y)
        .map(|(p, q)| {
            let u = map[0][0] * p[0] + map[0][1] * p[1] - q[0];
            let v = map[1][0] * p[0] + map[1][1] * p[1] - q[1];
            u * u + v * v
        })
        .sum();
    Ok((residual / x.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(m: usize) -> Vec<String> {
        (0..m).map(|i| format!("m{i}")).collect()
    }

    fn distances_of(points: &[[f64; 2]]) -> Vec<f64> {
        let m = points.len();
        let mut d = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                d[i * m + j] = ((points[i][0] - points[j][0]).powi(2) + (points[i][1] - points[j][1]).powi(2)).sqrt();
            }
        }
        d
    }

    #[test]
    fn jacobi_diagonalizes() {
        let a = [4.0, 1.0, 2.0, 1.0, 3.0, 0.5, 2.0, 0.5, 1.0];
        let (vals, vecs) = jacobi_eigen(&a, 3);
        assert!(vals.windows(2).all(|w| w[0] >= w[1]));
        for k in 0..3 {
            for r in 0..3 {
                let av: f64 = (0..3).map(|c| a[r * 3 + c] * vecs[c * 3 + k]).sum();
                assert!((av - vals[k] * vecs[r * 3 + k]).abs() < 1e-10);
            }
        }
        assert!((vals.iter().sum::<f64>() - 8.0).abs() < 1e-10);
    }

    #[test]
    fn equilateral_triangle() {
        let d = vec![0.0, 1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0];
        let e = classical_mds(&d, &labels(3)).unwrap();
        assert!(e.stress < 1e-9);
        for i in 0..3 {
            for j in i + 1..3 {
                let dx = e.coords[i][0] - e.coords[j][0];
                let dy = e.coords[i][1] - e.coords[j][1];
                assert!(((dx * dx + dy * dy).sqrt() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn planted_configuration_recovered() {
        let pts = [[0.0, 0.0], [3.0, 0.5], [1.0, 2.0], [-1.5, 1.0], [0.5, -2.0]];
        let e = classical_mds(&distances_of(&pts), &labels(5)).unwrap();
        assert!(procrustes_error(&e.coords, &pts).unwrap() < 1e-6);
        assert!(e.stress < 1e-9);
        assert!(e.negative_fraction < 1e-9);
    }

    #[test]
    fn sign_convention() {
        let pts = [[0.0, 0.0], [3.0, 0.5], [1.0, 2.0], [-1.5, 1.0]];
        let e = classical_mds(&distances_of(&pts), &labels(4)).unwrap();
        for axis in 0..2 {
            let first = e.coords.iter().map(|c| c[axis]).find(|x| x.abs() > 1e-12).unwrap();
            assert!(first > 0.0);
        }
    }

    #[test]
    fn invalid_inputs() {
        assert!(matches!(
            classical_mds(&[0.0; 4], &labels(2)),
            Err(EmbedError::TooFewPoints { .. })
        ));
        let mut d = vec![0.0, 1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0];
        d[1] = 2.0;
        assert!(matches!(classical_mds(&d, &labels(3)), Err(EmbedError::Asymmetric { .. })));
        d[1] = 1.0;
        d[0] = 0.5;
        assert!(matches!(classical_mds(&d, &labels(3)), Err(EmbedError::NonZeroDiagonal { .. })));
        d[0] = 0.0;
        d[1] = -1.0;
        d[3] = -1.0;
        assert!(matches!(classical_mds(&d, &labels(3)), Err(EmbedError::BadDistance { .. })));
    }

    #[test]
    fn zero_distances() {
        let e = classical_mds(&[0.0; 9], &labels(3)).unwrap();
        assert_eq!(e.stress, 0.0);
        assert!(e.coords.iter().all(|c| c[0].abs() < 1e-12 && c[1].abs() < 1e-12));
    }

    #[test]
    fn procrustes_handles_reflection_and_rotation() {
        let x = [[1.0, 0.0], [0.0, 2.0], [-1.0, -1.0], [3.0, 1.0]];
        let (s, c) = (0.3f64.sin(), 0.3f64.cos());
        let rotated: Vec<[f64; 2]> = x.iter().map(|p| [c * p[0] - s * p[1] + 5.0, s * p[0] + c * p[1]]).collect();
        let mirrored: Vec<[f64; 2]> = x.iter().map(|p| [-p[0], p[1]]).collect();
        assert!(procrustes_error(&x, &rotated).unwrap() < 1e-12);
        assert!(procrustes_error(&x, &mirrored).unwrap() < 1e-12);
        assert!(procrustes_error(&x, &[[0.0, 0.0]; 4]).unwrap() > 0.1);
    }

    #[test]
    fn exact_fit_does_not_lose_precision() {
        let h = 3f64.sqrt() / 2.0;
        let tri = [[0.0, 0.0], [1.0, 0.0], [0.5, h]];
        let e = classical_mds(&distances_of(&tri), &labels(3)).unwrap();
        assert!(procrustes_error(&e.coords, &tri).unwrap() < 1e-12);
    }
}
