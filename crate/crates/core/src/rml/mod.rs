//! Riemannian manifold learning: coordinates that keep geodesic distances
//! from a base curve and local angles, plus the inverse map from coordinates
//! back to curves.

mod graph;
mod solver;

pub use graph::{build_rml_graph, visibility_filter, RmlGraph};
pub use solver::{solve_angle_ls, solve_angle_ls_toward, AngleSolution};

use log::{debug, warn};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::{nearest_from_distances, nearest_to, pairwise_distances};

/// Mean and leading principal directions (as rows) of a set of curves.
#[derive(Debug, Clone)]
pub(crate) struct LocalBasis {
    pub mean: DVector<f64>,
    /// `r x T`, orthonormal rows.
    pub basis: DMatrix<f64>,
}

impl LocalBasis {
    /// Up to `d` principal directions of `rows`; directions whose singular
    /// value is below `1e-10` of the largest are dropped.
    pub fn fit(rows: &DMatrix<f64>, d: usize) -> Self {
        let (n, t) = rows.shape();
        let mean = rows.row_mean().transpose();
        let mut centered = rows.clone();
        for i in 0..n {
            for j in 0..t {
                centered[(i, j)] -= mean[j];
            }
        }
        let svd = centered.svd(false, true);
        let vt = svd.v_t.expect("right singular vectors were requested");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let top = order.first().map_or(0.0, |&i| svd.singular_values[i]);
        let keep: Vec<usize> = order
            .into_iter()
            .filter(|&i| top > 0.0 && svd.singular_values[i] > 1e-10 * top)
            .take(d)
            .collect();
        let basis = DMatrix::from_fn(keep.len(), t, |r, j| vt[(keep[r], j)]);
        Self { mean, basis }
    }

    pub fn rank(&self) -> usize {
        self.basis.nrows()
    }

    pub fn scores(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.basis * (y - &self.mean)
    }

    pub fn expand(&self, s: &DVector<f64>) -> DVector<f64> {
        &self.mean + self.basis.transpose() * s
    }
}

/// Reduced coordinates of every curve and the data needed to interpret them.
#[derive(Debug, Clone)]
pub struct Embedding {
    /// `n x d`; the base row is zero.
    pub coordinates: DMatrix<f64>,
    pub base_index: usize,
    pub d: usize,
    /// `d x T` tangent directions at the base.
    pub tangent_basis: DMatrix<f64>,
    pub k: usize,
    pub graph: RmlGraph,
    /// Nodes embedded along a fallback ray because no constraint was
    /// available.
    pub orphans: Vec<usize>,
}

/// `(node, coordinates)` pairs.
pub type NodeCoordinates = Vec<(usize, DVector<f64>)>;

/// Coordinates of the base neighborhood: projections of `Y_i - Y_0` on the
/// local principal directions, rescaled to length `||Y_i - Y_0||`. Returns
/// `(node, coordinates)` pairs for the first ring and the basis.
pub fn init_local_coordinates(
    graph: &RmlGraph,
    curves: &DMatrix<f64>,
    d: usize,
) -> Result<(NodeCoordinates, DMatrix<f64>)> {
    let base = graph.base_index;
    let ring = graph.first_ring();
    let mut members = vec![base];
    members.extend(&ring);
    if ring.len() < d {
        return Err(Error::Rank(format!(
            "base neighborhood has {} neighbors, fewer than d={d}; use a smaller d or a larger k",
            ring.len()
        )));
    }
    let local = LocalBasis::fit(&curves.select_rows(members.iter()), d);
    if local.rank() < d {
        return Err(Error::Rank(format!(
            "base neighborhood spans {} dimensions, fewer than d={d}; use a smaller d",
            local.rank()
        )));
    }
    let y0 = curves.row(base).transpose();
    let mut coords = Vec::with_capacity(ring.len());
    for &i in &ring {
        let diff = curves.row(i).transpose() - &y0;
        let z = &local.basis * &diff;
        let zn = z.norm();
        if zn == 0.0 {
            return Err(Error::Degenerate(format!(
                "curve {} is orthogonal to the tangent space at the base",
                i + 1
            )));
        }
        coords.push((i, z * (diff.norm() / zn)));
    }
    Ok((coords, local.basis))
}

/// Rows of the angle problem at predecessor `p`: unit directions from `Z_p`
/// toward its embedded neighbors and the matching projections of `Y - Y_p`.
fn angle_system(
    zs: &[Option<DVector<f64>>],
    curves: &DMatrix<f64>,
    p: usize,
    v: usize,
    partners: &[usize],
) -> (DMatrix<f64>, DVector<f64>) {
    let zp = zs[p].as_ref().expect("predecessor is embedded");
    let yp = curves.row(p).transpose();
    let dy = curves.row(v).transpose() - &yp;
    let mut a = DMatrix::zeros(partners.len(), zp.len());
    let mut b = DVector::zeros(partners.len());
    for (r, &i) in partners.iter().enumerate() {
        let dz = zs[i].as_ref().expect("partner is embedded") - zp;
        let yi = curves.row(i).transpose() - &yp;
        a.set_row(r, &(dz.transpose() / dz.norm()));
        b[r] = dy.dot(&yi) / yi.norm();
    }
    (a, b)
}

fn numeric_rank(a: &DMatrix<f64>) -> usize {
    if a.nrows() == 0 {
        return 0;
    }
    let s = a.clone().svd(false, false).singular_values;
    let top = s.max();
    s.iter().filter(|&&x| x > 1e-9 * top).count()
}

/// Embeds curves in `d` dimensions. The base neighborhood comes from local
/// PCA; every other curve is placed at distance `||Y - Y_p||` from its
/// predecessor so that angles toward the predecessor's embedded neighbors
/// match those of the curves.
pub fn rml_embed(curves: &DMatrix<f64>, d: usize, k: usize) -> Result<Embedding> {
    if d < 1 {
        return Err(Error::Input("embedding dimension must be at least 1".into()));
    }
    let graph = build_rml_graph(curves, k)?;
    let n = curves.nrows();
    let (ring, basis) = init_local_coordinates(&graph, curves, d)?;
    let mut zs: Vec<Option<DVector<f64>>> = vec![None; n];
    zs[graph.base_index] = Some(DVector::zeros(d));
    for (i, z) in ring {
        zs[i] = Some(z);
    }
    let dist = pairwise_distances(curves);
    let mut orphans = Vec::new();
    for &v in &graph.bfs_order {
        if zs[v].is_some() {
            continue;
        }
        let p = graph.predecessor[v].expect("non-base nodes have a predecessor");
        let r = dist[(v, p)];
        let mut partners: Vec<usize> = graph.adjacency[p]
            .iter()
            .map(|e| e.0)
            .filter(|&i| i != v && zs[i].is_some())
            .collect();
        let (mut a, mut b) = angle_system(&zs, curves, p, v, &partners);
        if numeric_rank(&a) < d {
            // Borrow embedded curves among the predecessor's nearest ones.
            for i in nearest_from_distances(&dist, p, 2 * k) {
                if i != v && zs[i].is_some() && !partners.contains(&i) {
                    partners.push(i);
                }
            }
            (a, b) = angle_system(&zs, curves, p, v, &partners);
        }
        let zp = zs[p].clone().expect("predecessor is embedded");
        if partners.is_empty() {
            let pp = graph.predecessor[p];
            let dir = match pp.and_then(|q| zs[q].clone()) {
                Some(zq) if (&zp - &zq).norm() > 0.0 => (&zp - &zq).normalize(),
                _ => {
                    let mut e = DVector::zeros(d);
                    e[0] = 1.0;
                    e
                }
            };
            warn!("curve {} has no embedded reference; placed on the predecessor ray", v + 1);
            orphans.push(v);
            zs[v] = Some(zp + dir * r);
            continue;
        }
        let centroid = partners
            .iter()
            .fold(DVector::zeros(d), |acc, &i| acc + zs[i].as_ref().expect("embedded"))
            / partners.len() as f64;
        let prefer = &zp - centroid;
        let sol = solve_angle_ls_toward(&a, &b, r, Some(&prefer))?;
        zs[v] = Some(zp + sol.u);
    }
    let mut coordinates = DMatrix::zeros(n, d);
    for (i, z) in zs.into_iter().enumerate() {
        let z = z.ok_or_else(|| Error::Connectivity(format!("curve {} was never reached", i + 1)))?;
        coordinates.set_row(i, &z.transpose());
    }
    debug!("embedded {n} curves in {d} dimensions with {} orphans", orphans.len());
    Ok(Embedding {
        coordinates,
        base_index: graph.base_index,
        d,
        tangent_basis: basis,
        k,
        graph,
        orphans,
    })
}

/// Curve for coordinates `z_new`: local PCA of the curves whose embeddings
/// are the `k` nearest to `z_new`, then the angle problem with the roles of
/// curves and coordinates swapped, expanded back on the local basis.
pub fn rml_reconstruct(
    train_y: &DMatrix<f64>,
    train_z: &DMatrix<f64>,
    z_new: &DVector<f64>,
    k: usize,
) -> Result<DVector<f64>> {
    let (m, d) = train_z.shape();
    if train_y.nrows() != m {
        return Err(Error::Shape(format!(
            "{} curves but {m} embedded points",
            train_y.nrows()
        )));
    }
    if z_new.len() != d {
        return Err(Error::Shape(format!("point has {} coordinates, expected {d}", z_new.len())));
    }
    if z_new.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("coordinates must be finite".into()));
    }
    if k < d + 1 {
        return Err(Error::Rank(format!("reconstruction needs k >= d + 1 = {}, got {k}", d + 1)));
    }
    if k > m {
        return Err(Error::Input(format!("k={k} exceeds the {m} training curves")));
    }
    let near = nearest_to(train_z, z_new, k);
    let idx: Vec<usize> = near.iter().map(|e| e.0).collect();
    let local = LocalBasis::fit(&train_y.select_rows(idx.iter()), d);
    let p = idx[0];
    let yp = local.scores(&train_y.row(p).transpose());
    let zp = train_z.row(p).transpose();
    let dz = z_new - &zp;
    let r = dz.norm();
    if r == 0.0 || local.rank() == 0 {
        return Ok(local.expand(&yp));
    }
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    let mut centroid = DVector::zeros(local.rank());
    for &i in &idx[1..] {
        let yi = local.scores(&train_y.row(i).transpose()) - &yp;
        let zi = train_z.row(i).transpose() - &zp;
        let (ny, nz) = (yi.norm(), zi.norm());
        if ny == 0.0 || nz == 0.0 {
            continue;
        }
        rows.push(yi.transpose() / ny);
        targets.push(dz.dot(&zi) / nz);
        centroid += yi;
    }
    if rows.is_empty() {
        return Ok(local.expand(&yp));
    }
    let a = DMatrix::from_rows(&rows);
    let b = DVector::from_vec(targets);
    let prefer = -centroid / rows.len() as f64;
    let sol = solve_angle_ls_toward(&a, &b, r, Some(&prefer))?;
    Ok(local.expand(&(yp + sol.u)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    /// Orthonormal `2 x T` basis of a random plane and random latent points.
    fn planar(n: usize, t: usize, seed: u64) -> (DMatrix<f64>, DMatrix<f64>) {
        let mut rng = seeded(seed);
        let raw = DMatrix::from_fn(t, 2, |_, _| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng));
        let q = raw.qr().q();
        let offset = DVector::from_fn(t, |_, _| rng.random_range(-1.0..1.0));
        let latent = DMatrix::from_fn(n, 2, |_, _| rng.random_range(0.0..1.0));
        let curves = DMatrix::from_fn(n, t, |i, j| offset[j] + q[(j, 0)] * latent[(i, 0)] + q[(j, 1)] * latent[(i, 1)]);
        (curves, latent)
    }

    /// Relative residual after the best rigid alignment of `z` onto `truth`.
    fn procrustes(z: &DMatrix<f64>, truth: &DMatrix<f64>) -> f64 {
        let center = |m: &DMatrix<f64>| {
            let mean = m.row_mean();
            DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] - mean[j])
        };
        let a = center(z);
        let b = center(truth);
        let svd = (a.transpose() * &b).svd(true, true);
        let rot = svd.u.unwrap() * svd.v_t.unwrap();
        (a * rot - &b).norm() / b.norm()
    }

    #[test]
    fn planar_data_is_recovered() {
        let (curves, latent) = planar(150, 30, 1);
        let e = rml_embed(&curves, 2, 12).unwrap();
        assert!(e.orphans.is_empty());
        assert!(procrustes(&e.coordinates, &latent) < 1e-6);
        let y0 = curves.row(e.base_index);
        for i in e.graph.first_ring() {
            let r = (curves.row(i) - y0).norm();
            assert!((e.coordinates.row(i).norm() - r).abs() <= 1e-9 * r);
        }
        for v in 0..150 {
            if let Some(p) = e.graph.predecessor[v] {
                let r = (curves.row(v) - curves.row(p)).norm();
                let zr = (e.coordinates.row(v) - e.coordinates.row(p)).norm();
                assert!((zr - r).abs() <= 1e-8 * r);
            }
        }
    }

    #[test]
    fn exact_tangent_needs_no_rescaling() {
        let (curves, _) = planar(40, 10, 2);
        let g = build_rml_graph(&curves, 7).unwrap();
        let (ring, basis) = init_local_coordinates(&g, &curves, 2).unwrap();
        let y0 = curves.row(g.base_index).transpose();
        for (i, z) in ring {
            let proj = &basis * (curves.row(i).transpose() - &y0);
            assert!((proj.norm() / z.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn one_dimensional_radii() {
        let curves = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 0.0, -2.0, 0.0]);
        let g = build_rml_graph(&curves, 2).unwrap();
        assert_eq!(g.base_index, 0);
        let (ring, _) = init_local_coordinates(&g, &curves, 1).unwrap();
        let mut radii: Vec<f64> = ring.iter().map(|(_, z)| z.norm()).collect();
        radii.sort_by(f64::total_cmp);
        assert!((radii[0] - 1.0).abs() < 1e-15 && (radii[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn curved_patch_keeps_radii() {
        let mut rng = seeded(3);
        let curves = DMatrix::from_fn(80, 3, |_, _| 0.0);
        let mut curves = curves;
        for i in 0..80 {
            let (u, v): (f64, f64) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            curves.set_row(i, &nalgebra::RowDVector::from_vec(vec![u, v, 0.3 * (u * u + v * v)]));
        }
        let g = build_rml_graph(&curves, 9).unwrap();
        let (ring, _) = init_local_coordinates(&g, &curves, 2).unwrap();
        let y0 = curves.row(g.base_index);
        for (i, z) in ring {
            let r = (curves.row(i) - y0).norm();
            assert!((z.norm() - r).abs() <= 1e-12 * r.max(1.0));
        }
    }

    #[test]
    fn full_dimension_is_isometric() {
        let mut rng = seeded(4);
        let curves = DMatrix::from_fn(12, 3, |_, _| rng.random_range(-1.0..1.0));
        let e = rml_embed(&curves, 3, 11).unwrap();
        let dy = pairwise_distances(&curves);
        let dz = pairwise_distances(&e.coordinates);
        assert!((dy - dz).abs().max() < 1e-6);
    }

    #[test]
    fn rigid_motion_equivariance() {
        let (curves, _) = planar(60, 8, 5);
        let mut rng = seeded(6);
        let raw = DMatrix::from_fn(8, 8, |_, _| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng));
        let q = raw.qr().q();
        let shift = DVector::from_fn(8, |_, _| rng.random_range(-3.0..3.0));
        let mut moved = &curves * q.transpose();
        for mut row in moved.row_iter_mut() {
            row += shift.transpose();
        }
        let a = rml_embed(&curves, 2, 8).unwrap();
        let b = rml_embed(&moved, 2, 8).unwrap();
        let da = pairwise_distances(&a.coordinates);
        let db = pairwise_distances(&b.coordinates);
        assert!((da - db).abs().max() < 1e-8);
    }

    #[test]
    fn reconstruction_round_trip_on_flat_data() {
        let (curves, _) = planar(80, 20, 7);
        let e = rml_embed(&curves, 2, 10).unwrap();
        for i in (0..80).step_by(7) {
            let y = rml_reconstruct(&curves, &e.coordinates, &e.coordinates.row(i).transpose(), 6).unwrap();
            let truth = curves.row(i).transpose();
            assert!((y - &truth).norm() <= 1e-6 * truth.norm());
        }
        // Midpoints of embedded points map to midpoints of curves.
        let mid = (e.coordinates.row(3) + e.coordinates.row(40)).transpose() / 2.0;
        let y = rml_reconstruct(&curves, &e.coordinates, &mid, 6).unwrap();
        let truth = (curves.row(3) + curves.row(40)).transpose() / 2.0;
        assert!((y - &truth).norm() <= 1e-6 * truth.norm());
    }

    #[test]
    fn reconstruction_needs_enough_neighbors() {
        let (curves, _) = planar(20, 5, 8);
        let z = DMatrix::from_fn(20, 2, |i, j| curves[(i, j)]);
        assert!(matches!(
            rml_reconstruct(&curves, &z, &DVector::zeros(2), 2),
            Err(Error::Rank(_))
        ));
    }
}
