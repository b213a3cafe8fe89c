//! Generalized sensitivity indices: ANOVA of principal-component scores over
//! an orthogonal two-level design, aggregated with the inertia of each
//! component.

use std::cmp::Ordering;
use std::fmt::Write as _;

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::data::{center_and_inertia, Coding, CurveEnsemble, DesignMatrix};
use crate::error::{Error, Result};
use crate::fpca::{pca_decompose, truncate_components, PcaDecomposition};

/// Relative size under which a component is treated as degenerate.
pub const DEGENERATE_COMPONENT: f64 = 1e-12;

/// Ordered list of factorial effects. Each effect is a sorted, non-empty set
/// of factor indices; its length is the interaction order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EffectSet {
    effects: Vec<Vec<usize>>,
}

impl EffectSet {
    pub fn new(effects: Vec<Vec<usize>>) -> Result<Self> {
        let mut out: Vec<Vec<usize>> = Vec::with_capacity(effects.len());
        for mut e in effects {
            e.sort_unstable();
            e.dedup();
            if e.is_empty() {
                return Err(Error::Input("effects must involve at least one factor".into()));
            }
            if out.contains(&e) {
                return Err(Error::Input(format!("duplicate effect {e:?}")));
            }
            out.push(e);
        }
        Ok(Self { effects: out })
    }

    /// The `p` main effects.
    pub fn main_effects(p: usize) -> Self {
        Self {
            effects: (0..p).map(|i| vec![i]).collect(),
        }
    }

    /// All effects of order `1..=order`, lower orders first.
    pub fn up_to_order(p: usize, order: usize) -> Self {
        let mut effects: Vec<Vec<usize>> = (1u64..(1u64 << p))
            .filter(|m| (m.count_ones() as usize) <= order)
            .map(|m| (0..p).filter(|i| m >> i & 1 == 1).collect())
            .collect();
        effects.sort_by(compare_effects);
        Self { effects }
    }

    /// Every one of the `2^p - 1` effects.
    pub fn all(p: usize) -> Self {
        Self::up_to_order(p, p)
    }

    pub fn effects(&self) -> &[Vec<usize>] {
        &self.effects
    }

    pub fn len(&self) -> usize {
        self.effects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.effects.is_empty()
    }

    /// `V5` for a main effect, `V1:V2` for an interaction.
    pub fn labels(&self, names: &[String]) -> Vec<String> {
        self.effects
            .iter()
            .map(|e| e.iter().map(|&i| names[i].as_str()).collect::<Vec<_>>().join(":"))
            .collect()
    }
}

/// Lower order first, then ascending factor indices.
fn compare_effects(a: &Vec<usize>, b: &Vec<usize>) -> Ordering {
    a.len().cmp(&b.len()).then_with(|| a.cmp(b))
}

fn require_factorial(design: &DesignMatrix) -> Result<()> {
    if design.coding() != Coding::Factorial {
        return Err(Error::Coding("ANOVA decomposition needs a +/-1 factorial design".into()));
    }
    Ok(())
}

/// Element-wise product of the design columns in `effect`.
fn contrast(design: &DesignMatrix, effect: &[usize]) -> Result<DVector<f64>> {
    let x = design.values();
    if let Some(&bad) = effect.iter().find(|&&i| i >= x.ncols()) {
        return Err(Error::Input(format!(
            "effect refers to factor {} but the design has {}",
            bad + 1,
            x.ncols()
        )));
    }
    Ok(DVector::from_fn(x.nrows(), |r, _| effect.iter().map(|&j| x[(r, j)]).product()))
}

/// Contrast columns of an effect set, checked to be mutually orthogonal and
/// orthogonal to the mean.
fn contrasts(design: &DesignMatrix, effects: &EffectSet) -> Result<Vec<DVector<f64>>> {
    require_factorial(design)?;
    let labels = effects.labels(design.column_names());
    let n = design.runs() as f64;
    let cols = effects
        .effects()
        .iter()
        .map(|e| contrast(design, e))
        .collect::<Result<Vec<_>>>()?;
    for (a, ca) in cols.iter().enumerate() {
        if ca.sum().abs() == n {
            return Err(Error::Aliasing(format!("{} is aliased with the mean", labels[a])));
        }
        for b in (a + 1)..cols.len() {
            let dot = ca.dot(&cols[b]);
            if dot.abs() == n {
                return Err(Error::Aliasing(format!("{} is aliased with {}", labels[a], labels[b])));
            }
            if dot != 0.0 {
                return Err(Error::Aliasing(format!(
                    "{} and {} are partially confounded (design not orthogonal)",
                    labels[a], labels[b]
                )));
            }
        }
    }
    Ok(cols)
}

/// `||S_W h||^2 = (c' h)^2 / n` for the contrast column `c` of `effect`.
pub fn effect_sum_of_squares(design: &DesignMatrix, h: &DVector<f64>, effect: &[usize]) -> Result<f64> {
    require_factorial(design)?;
    if h.len() != design.runs() {
        return Err(Error::Shape(format!(
            "score vector has {} entries, design has {} runs",
            h.len(),
            design.runs()
        )));
    }
    let c = contrast(design, effect)?;
    let n = design.runs() as f64;
    if c.sum().abs() == n {
        return Err(Error::Aliasing(format!("effect {effect:?} is aliased with the mean")));
    }
    Ok(c.dot(h).powi(2) / n)
}

/// Per-component sensitivity indices, `effects x T0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentSi {
    pub si: DMatrix<f64>,
    /// Components whose variance was too small to analyse.
    pub skipped: Vec<usize>,
}

fn si_from_contrasts(cols: &[DVector<f64>], pca: &PcaDecomposition, t0: usize, n: f64) -> ComponentSi {
    let mut si = DMatrix::zeros(cols.len(), t0);
    let mut skipped = Vec::new();
    for k in 0..t0 {
        let h = pca.scores.column(k);
        let mean = h.mean();
        let ss: f64 = h.iter().map(|v| (v - mean).powi(2)).sum();
        if ss <= DEGENERATE_COMPONENT * pca.total_inertia || ss == 0.0 {
            warn!("principal component {} has negligible variance; skipped", k + 1);
            skipped.push(k);
            continue;
        }
        for (w, c) in cols.iter().enumerate() {
            si[(w, k)] = (c.dot(&h).powi(2) / n / ss).clamp(0.0, 1.0);
        }
    }
    ComponentSi { si, skipped }
}

/// `SI_W(h_k) = SS_{W,k} / SS(h_k)` for the first `t0` components.
pub fn compute_si(design: &DesignMatrix, pca: &PcaDecomposition, effects: &EffectSet, t0: usize) -> Result<ComponentSi> {
    if t0 == 0 || t0 > pca.rank() {
        return Err(Error::Input(format!("T0={t0} must be in 1..={}", pca.rank())));
    }
    if pca.scores.nrows() != design.runs() {
        return Err(Error::Shape("design and scores differ in run count".into()));
    }
    let cols = contrasts(design, effects)?;
    Ok(si_from_contrasts(&cols, pca, t0, design.runs() as f64))
}

/// Full screening result for one output.
#[derive(Debug, Clone, PartialEq)]
pub struct GsiReport {
    pub effects: EffectSet,
    pub labels: Vec<String>,
    /// `effects x t0`.
    pub per_component_si: DMatrix<f64>,
    /// `lambda_k / I` for `k < t0`.
    pub inertia_shares: Vec<f64>,
    pub gsi: Vec<f64>,
    pub t0: usize,
    pub skipped_components: Vec<usize>,
    /// `None` where the output column has no variance.
    pub dynamic_r2: Vec<Option<f64>>,
    pub time_grid: Vec<f64>,
}

/// Screens every effect in `effects` against the curve ensemble.
pub fn compute_gsi(design: &DesignMatrix, curves: &CurveEnsemble, effects: &EffectSet, x_percent: f64) -> Result<GsiReport> {
    if design.runs() != curves.runs() {
        return Err(Error::Shape(format!(
            "design has {} runs but there are {} curves",
            design.runs(),
            curves.runs()
        )));
    }
    let cols = contrasts(design, effects)?;
    let centered = center_and_inertia(curves)?;
    let pca = pca_decompose(&centered)?;
    let t0 = truncate_components(&pca, x_percent)?;
    gsi_from_parts(design, curves, effects, &cols, &pca, t0)
}

fn gsi_from_parts(
    design: &DesignMatrix,
    curves: &CurveEnsemble,
    effects: &EffectSet,
    cols: &[DVector<f64>],
    pca: &PcaDecomposition,
    t0: usize,
) -> Result<GsiReport> {
    let n = design.runs() as f64;
    let ComponentSi { si, skipped } = si_from_contrasts(cols, pca, t0, n);
    let shares: Vec<f64> = pca.inertia_shares()[..t0].to_vec();
    let gsi: Vec<f64> = (0..cols.len())
        .map(|w| (0..t0).map(|k| shares[k] * si[(w, k)]).sum())
        .collect();

    // Approximation restricted to the listed effects and the first t0
    // components: sum_W S_W H~ L~'.
    let mut approx_c = DMatrix::zeros(curves.runs(), curves.time_steps());
    for k in (0..t0).filter(|k| !skipped.contains(k)) {
        let h = pca.scores.column(k);
        let mut projected = DVector::zeros(curves.runs());
        for c in cols {
            projected.axpy(c.dot(&h) / n, c, 1.0);
        }
        approx_c += projected * pca.eigenvectors.column(k).transpose();
    }
    for mut row in approx_c.row_iter_mut() {
        row += pca.column_means.transpose();
    }
    let r2 = dynamic_r2(curves, &approx_c)?;

    Ok(GsiReport {
        labels: effects.labels(design.column_names()),
        effects: effects.clone(),
        per_component_si: si,
        inertia_shares: shares,
        gsi,
        t0,
        skipped_components: skipped,
        dynamic_r2: r2,
        time_grid: curves.time_grid().to_vec(),
    })
}

/// Variance below which a column is treated as constant: `1e-12 * max|Y|^2`.
pub(crate) fn variance_floor(y: &DMatrix<f64>) -> f64 {
    1e-12 * y.amax().powi(2)
}

/// `R2_t = sum_i (y~_it - ybar_t)^2 / sum_i (y_it - ybar_t)^2`, with `ybar`
/// taken from the observed curves.
pub fn dynamic_r2(curves: &CurveEnsemble, approx: &DMatrix<f64>) -> Result<Vec<Option<f64>>> {
    let y = curves.values();
    if y.shape() != approx.shape() {
        return Err(Error::Shape(format!(
            "approximation is {:?}, curves are {:?}",
            approx.shape(),
            y.shape()
        )));
    }
    let n = y.nrows() as f64;
    let floor = variance_floor(y);
    Ok((0..y.ncols())
        .map(|t| {
            let mean = y.column(t).mean();
            let total: f64 = y.column(t).iter().map(|v| (v - mean).powi(2)).sum();
            if total / n <= floor || total == 0.0 {
                return None;
            }
            let explained: f64 = approx.column(t).iter().map(|v| (v - mean).powi(2)).sum();
            Some(explained / total)
        })
        .collect())
}

/// Marker written for undefined ratios.
pub const UNDEFINED: &str = "NA";

/// Screening table: effects by decreasing GSI (ties by ascending factor
/// index), percentages with two decimals, rows under `threshold_percent`
/// dropped, then the total over all effects.
pub fn format_screening_report(report: &GsiReport, threshold_percent: f64) -> String {
    let mut out = String::from("rank,effect,gsi_percent\n");
    if report.gsi.is_empty() {
        return out;
    }
    let effects = report.effects.effects();
    let mut order: Vec<usize> = (0..report.gsi.len()).collect();
    order.sort_by(|&a, &b| {
        report.gsi[b]
            .total_cmp(&report.gsi[a])
            .then_with(|| compare_effects(&effects[a], &effects[b]))
    });
    let mut rank = 0;
    for &w in &order {
        let pct = 100.0 * report.gsi[w];
        if pct + 1e-12 < threshold_percent {
            continue;
        }
        rank += 1;
        writeln!(out, "{rank},{},{pct:.2}", report.labels[w]).unwrap();
    }
    let total: f64 = report.gsi.iter().sum::<f64>() * 100.0;
    writeln!(out, ",total,{total:.2}").unwrap();
    out
}

/// Per-component table: one row per effect, one column per component.
pub fn si_table_csv(report: &GsiReport) -> String {
    let mut out = String::from("effect");
    for k in 0..report.t0 {
        write!(out, ",PC{}", k + 1).unwrap();
    }
    out.push('\n');
    out.push_str("inertia_share");
    for s in &report.inertia_shares {
        write!(out, ",{s}").unwrap();
    }
    out.push('\n');
    for (w, label) in report.labels.iter().enumerate() {
        out.push_str(label);
        for k in 0..report.t0 {
            write!(out, ",{}", report.per_component_si[(w, k)]).unwrap();
        }
        out.push('\n');
    }
    out
}

/// `time,r2` table with the undefined marker where needed.
pub fn dynamic_r2_csv(time_grid: &[f64], r2: &[Option<f64>]) -> String {
    let mut out = String::from("time,r2\n");
    for (t, v) in time_grid.iter().zip(r2) {
        match v {
            Some(v) => writeln!(out, "{t},{v}").unwrap(),
            None => writeln!(out, "{t},{UNDEFINED}").unwrap(),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::doe::{factorial_design, generate_fractional_factorial, FactorialDesignSpec};
    use crate::rng::seeded;
    use rand::Rng;

    fn full(p: usize) -> DesignMatrix {
        factorial_design(&FactorialDesignSpec::full(p).unwrap(), 0).unwrap()
    }

    fn col(d: &DesignMatrix, e: &[usize]) -> DVector<f64> {
        contrast(d, e).unwrap()
    }

    /// ANOVA applied to each output column, weighted by its share of the
    /// inertia. Independent of the PCA route.
    fn columnwise_gsi(design: &DesignMatrix, y: &DMatrix<f64>, effects: &EffectSet) -> Vec<f64> {
        let n = y.nrows() as f64;
        let mut total = 0.0;
        let mut ss = vec![0.0; effects.len()];
        for t in 0..y.ncols() {
            let mean = y.column(t).mean();
            let yc = y.column(t).map(|v| v - mean);
            total += yc.norm_squared();
            for (w, e) in effects.effects().iter().enumerate() {
                let c = col(design, e);
                ss[w] += c.dot(&yc).powi(2) / n;
            }
        }
        ss.iter().map(|s| s / total).collect()
    }

    #[test]
    fn pure_main_effect_sum_of_squares() {
        let d = full(3);
        let h = col(&d, &[0]);
        assert_eq!(effect_sum_of_squares(&d, &h, &[0]).unwrap(), 8.0);
        assert_eq!(effect_sum_of_squares(&d, &h, &[1]).unwrap(), 0.0);
        let zero = DVector::zeros(8);
        assert_eq!(effect_sum_of_squares(&d, &zero, &[2]).unwrap(), 0.0);
    }

    #[test]
    fn interaction_contrast_in_two_squared() {
        let d = full(2);
        // h equals the interaction contrast (1, -1, -1, 1) in standard order,
        // whatever row order the design uses.
        let h = col(&d, &[0, 1]);
        assert_eq!(effect_sum_of_squares(&d, &h, &[0, 1]).unwrap(), 4.0);
        assert_eq!(effect_sum_of_squares(&d, &h, &[0]).unwrap(), 0.0);
        assert_eq!(effect_sum_of_squares(&d, &h, &[1]).unwrap(), 0.0);
    }

    #[test]
    fn aliased_effects_are_rejected() {
        let spec = FactorialDesignSpec::new(4, 1, vec![vec![0, 1, 2]]).unwrap();
        let d = factorial_design(&spec, 0).unwrap();
        // AB is aliased with CD under I = ABCD.
        let set = EffectSet::new(vec![vec![0, 1], vec![2, 3]]).unwrap();
        assert!(matches!(contrasts(&d, &set), Err(Error::Aliasing(_))));
        let h = DVector::from_element(8, 1.0);
        assert!(matches!(effect_sum_of_squares(&d, &h, &[0, 1, 2, 3]), Err(Error::Aliasing(_))));
    }

    fn pca_for(y: &DMatrix<f64>) -> PcaDecomposition {
        pca_decompose(&crate::data::center_matrix(y).unwrap()).unwrap()
    }

    #[test]
    fn si_of_pure_main_effect_component() {
        let d = full(5);
        let c5 = col(&d, &[4]);
        let y = DMatrix::from_fn(32, 3, |i, t| c5[i] * (t as f64 + 1.0));
        let pca = pca_for(&y);
        let si = compute_si(&d, &pca, &EffectSet::main_effects(5), 1).unwrap();
        assert!((si.si[(4, 0)] - 1.0).abs() < 1e-12);
        for w in 0..4 {
            assert!(si.si[(w, 0)].abs() < 1e-12);
        }
    }

    #[test]
    fn si_for_mixed_contrast() {
        let d = full(3);
        let h = col(&d, &[0]) * 2.0 + col(&d, &[1, 2]);
        let y = DMatrix::from_fn(8, 1, |i, _| h[i]);
        let pca = pca_for(&y);
        let set = EffectSet::all(3);
        let si = compute_si(&d, &pca, &set, 1).unwrap();
        let idx = |e: &[usize]| set.effects().iter().position(|x| x == e).unwrap();
        assert!((si.si[(idx(&[0]), 0)] - 0.8).abs() < 1e-12);
        assert!((si.si[(idx(&[1, 2]), 0)] - 0.2).abs() < 1e-12);
        let total: f64 = si.si.column(0).sum();
        assert!(total <= 1.0 + 1e-9);
    }

    #[test]
    fn single_factor_model_has_unit_gsi() {
        let d = generate_fractional_factorial(7, 4, 2).unwrap().design;
        let y = DMatrix::from_fn(d.runs(), 20, |i, t| d.values()[(i, 0)] * (t as f64 * 0.3).sin() + 1.0);
        let curves = CurveEnsemble::new(y, None).unwrap();
        let r = compute_gsi(&d, &curves, &EffectSet::main_effects(7), 100.0).unwrap();
        assert!((r.gsi[0] - 1.0).abs() < 1e-9);
        assert!(r.gsi[1..].iter().all(|g| g.abs() < 1e-9));
    }

    #[test]
    fn linear_model_matches_analytic_ratio() {
        let d = generate_fractional_factorial(6, 4, 1).unwrap().design;
        let t = 15;
        let mut rng = seeded(3);
        let a = DMatrix::from_fn(6, t, |_, _| rng.random_range(-1.0..1.0));
        let y = d.values() * &a;
        let curves = CurveEnsemble::new(y, None).unwrap();
        let r = compute_gsi(&d, &curves, &EffectSet::main_effects(6), 100.0).unwrap();
        let denom = a.norm_squared();
        for j in 0..6 {
            let expected = a.row(j).norm_squared() / denom;
            assert!((r.gsi[j] - expected).abs() < 1e-8);
        }
    }

    #[test]
    fn pca_route_matches_columnwise_anova() {
        let d = full(4);
        let mut rng = seeded(8);
        let y = DMatrix::from_fn(16, 9, |_, _| rng.random_range(-1.0..1.0));
        let set = EffectSet::up_to_order(4, 2);
        let curves = CurveEnsemble::new(y.clone(), None).unwrap();
        let r = compute_gsi(&d, &curves, &set, 100.0).unwrap();
        let oracle = columnwise_gsi(&d, &y, &set);
        for (a, b) in r.gsi.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn full_decomposition_closes() {
        let d = full(4);
        let mut rng = seeded(9);
        let y = DMatrix::from_fn(16, 7, |_, _| rng.random_range(-3.0..3.0));
        let curves = CurveEnsemble::new(y, None).unwrap();
        let r = compute_gsi(&d, &curves, &EffectSet::all(4), 100.0).unwrap();
        assert!((r.gsi.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        for v in &r.dynamic_r2 {
            assert!((v.unwrap() - 1.0).abs() < 1e-10);
        }
        for k in 0..r.t0 {
            assert!((r.per_component_si.column(k).sum() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn scale_and_inert_factor_invariance() {
        let d = full(4);
        let y = DMatrix::from_fn(16, 5, |i, t| {
            let x = d.values();
            x[(i, 0)] * (t as f64) + 0.5 * x[(i, 1)] * x[(i, 2)] - 0.2 * x[(i, 2)]
        });
        let set = EffectSet::up_to_order(4, 2);
        let a = compute_gsi(&d, &CurveEnsemble::new(y.clone(), None).unwrap(), &set, 100.0).unwrap();
        let b = compute_gsi(&d, &CurveEnsemble::new(y * -3.5, None).unwrap(), &set, 100.0).unwrap();
        for (x, y) in a.gsi.iter().zip(&b.gsi) {
            assert!((x - y).abs() < 1e-10);
        }
        // Factor index 3 is ignored by the output.
        assert!(a.gsi[3].abs() <= 1e-9);
    }

    #[test]
    fn dynamic_r2_extremes() {
        let y = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 2.0, 6.0, 2.0]);
        let curves = CurveEnsemble::new(y.clone(), None).unwrap();
        let r = dynamic_r2(&curves, &y).unwrap();
        assert_eq!(r[0], Some(1.0));
        assert_eq!(r[1], None);
        let means = DMatrix::from_fn(3, 2, |_, t| y.column(t).mean());
        assert_eq!(dynamic_r2(&curves, &means).unwrap()[0], Some(0.0));
        // Hand case: column 0 mean 3, deviations (-2,-1,3) -> total 14;
        // approximation (2, 3, 5) -> deviations (-1,0,2) -> 5.
        let approx = DMatrix::from_row_slice(3, 2, &[2.0, 2.0, 3.0, 2.0, 5.0, 2.0]);
        let r = dynamic_r2(&curves, &approx).unwrap();
        assert!((r[0].unwrap() - 5.0 / 14.0).abs() < 1e-12);
    }

    /// GSI values of the published screening table plus 19 small filler
    /// values for the remaining inputs.
    fn table_fixture() -> GsiReport {
        let top = [
            (5, 25.45),
            (8, 10.29),
            (7, 6.71),
            (29, 6.03),
            (31, 3.97),
            (9, 3.35),
            (13, 3.27),
            (6, 2.59),
            (14, 2.51),
            (4, 2.10),
            (30, 1.74),
            (11, 1.03),
        ];
        let mut gsi = vec![0.3 / 100.0; 31];
        for (v, pct) in top {
            gsi[v - 1] = pct / 100.0;
        }
        let effects = EffectSet::main_effects(31);
        GsiReport {
            labels: effects.labels(&crate::data::default_factor_names(31)),
            effects,
            per_component_si: DMatrix::zeros(31, 0),
            inertia_shares: vec![],
            gsi,
            t0: 0,
            skipped_components: vec![],
            dynamic_r2: vec![],
            time_grid: vec![],
        }
    }

    #[test]
    fn screening_table_matches_published_layout() {
        let text = format_screening_report(&table_fixture(), 1.0);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "rank,effect,gsi_percent");
        assert_eq!(lines[1], "1,V5,25.45");
        assert_eq!(lines[12], "12,V11,1.03");
        assert_eq!(lines.len(), 14);
        assert!(lines[13].starts_with(",total,"));
    }

    #[test]
    fn empty_effect_set_gives_header_only() {
        let mut r = table_fixture();
        r.effects = EffectSet::new(vec![]).unwrap();
        r.labels.clear();
        r.gsi.clear();
        assert_eq!(format_screening_report(&r, 1.0), "rank,effect,gsi_percent\n");
    }

    #[test]
    fn ties_sort_by_factor_index() {
        let mut r = table_fixture();
        r.gsi = vec![0.1; 31];
        let text = format_screening_report(&r, 0.0);
        let second: Vec<&str> = text.lines().skip(1).take(3).collect();
        assert_eq!(second, vec!["1,V1,10.00", "2,V2,10.00", "3,V3,10.00"]);
    }
}
