//! Fidelity of synthetic tables: marginal distances, association-matrix
//! differences and machine-learning utility.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::{ColumnAssignment, ColumnKind, RawTable};
use crate::math;
use crate::nn::{
    conditional_cross_entropy, AdamConfig, AdamState, BlockSpec, Graph, LayerSpec, Mode, Net, NetSpec,
    Residual, Tensor2,
};
use crate::rng::stream;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("schema mismatch: {0}")]
    Schema(String),
    #[error("not applicable: {0}")]
    NotApplicable(&'static str),
    #[error("target column {0:?} holds a single class")]
    SingleClass(String),
    #[error("unknown column {0:?} in the assignment")]
    UnknownColumn(String),
    #[error(transparent)]
    Nn(#[from] crate::nn::NnError),
}

fn check_schemas(real: &RawTable, synth: &RawTable) -> Result<(), EvalError> {
    let a = &real.schema.columns;
    let b = &synth.schema.columns;
    if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| x.name != y.name || x.kind != y.kind) {
        return Err(EvalError::Schema("column names or kinds differ".into()));
    }
    Ok(())
}

fn frequencies(values: &[u32], k: usize) -> Vec<f64> {
    let mut f = vec![0.0; k];
    for &v in values {
        f[v as usize] += 1.0;
    }
    let n = values.len().max(1) as f64;
    f.iter_mut().for_each(|x| *x /= n);
    f
}

/// Jensen-Shannon divergence with base-2 logarithms.
pub fn jsd(p: &[f64], q: &[f64]) -> f64 {
    let kl = |a: &[f64], m: &[f64]| -> f64 {
        a.iter()
            .zip(m)
            .filter(|(&x, _)| x > 0.0)
            .map(|(&x, &y)| x * math::log2(x / y))
            .sum()
    };
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
    (0.5 * kl(p, &m) + 0.5 * kl(q, &m)).clamp(0.0, 1.0)
}

/// Mean JSD over categorical columns; `None` without any.
pub fn avg_jsd(real: &RawTable, synth: &RawTable) -> Result<Option<f64>, EvalError> {
    check_schemas(real, synth)?;
    let mut total = 0.0;
    let mut count = 0;
    for (j, col) in real.schema.columns.iter().enumerate() {
        if col.kind != ColumnKind::Categorical {
            continue;
        }
        let k = col.categories.len();
        let p = frequencies(real.columns[j].as_categorical().expect("categorical"), k);
        let q = frequencies(synth.columns[j].as_categorical().expect("categorical"), k);
        total += jsd(&p, &q);
        count += 1;
    }
    Ok((count > 0).then(|| total / count as f64))
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Empirical 1-Wasserstein distance: the area between the two CDFs.
pub fn wasserstein_1(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let (a, b) = (sorted(a), sorted(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut x = a[0].min(b[0]);
    let mut dist = 0.0;
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(&u), Some(&v)) => u.min(v),
            (Some(&u), None) => u,
            (None, Some(&v)) => v,
            (None, None) => break,
        };
        dist += (i as f64 / na - j as f64 / nb).abs() * (next - x);
        x = next;
        while i < a.len() && a[i] == next {
            i += 1;
        }
        while j < b.len() && b[j] == next {
            j += 1;
        }
    }
    dist
}

/// Mean WD over continuous and mixed columns after min-max scaling both
/// sides with the real column's range. Constant real columns are skipped
/// and reported in the warnings.
pub fn avg_wd(real: &RawTable, synth: &RawTable) -> Result<(Option<f64>, Vec<String>), EvalError> {
    check_schemas(real, synth)?;
    let mut warnings = Vec::new();
    let mut total = 0.0;
    let mut count = 0;
    for (j, col) in real.schema.columns.iter().enumerate() {
        if col.kind == ColumnKind::Categorical {
            continue;
        }
        let r = real.columns[j].as_numeric().expect("numeric");
        let s = synth.columns[j].as_numeric().expect("numeric");
        let lo = r.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let range = hi - lo;
        if !(range > 0.0) {
            warnings.push(format!("{}: constant real column skipped", col.name));
            continue;
        }
        let scale = |v: &[f64]| v.iter().map(|x| (x - lo) / range).collect::<Vec<_>>();
        total += wasserstein_1(&scale(r), &scale(s));
        count += 1;
    }
    Ok(((count > 0).then(|| total / count as f64), warnings))
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / math::sqrt(sxx * syy)).clamp(-1.0, 1.0))
}

/// Cramér's V without bias correction.
pub fn cramers_v(x: &[u32], kx: usize, y: &[u32], ky: usize) -> Option<f64> {
    let n = x.len() as f64;
    let mut table = vec![0.0; kx * ky];
    for (&a, &b) in x.iter().zip(y) {
        table[a as usize * ky + b as usize] += 1.0;
    }
    let rows: Vec<f64> = (0..kx).map(|a| (0..ky).map(|b| table[a * ky + b]).sum()).collect();
    let cols: Vec<f64> = (0..ky).map(|b| (0..kx).map(|a| table[a * ky + b]).sum()).collect();
    let r = rows.iter().filter(|&&v| v > 0.0).count();
    let c = cols.iter().filter(|&&v| v > 0.0).count();
    let k = r.min(c);
    if k < 2 {
        return None;
    }
    let mut chi2 = 0.0;
    for a in 0..kx {
        for b in 0..ky {
            let e = rows[a] * cols[b] / n;
            if e > 0.0 {
                let d = table[a * ky + b] - e;
                chi2 += d * d / e;
            }
        }
    }
    Some(math::sqrt(chi2 / (n * (k - 1) as f64)).clamp(0.0, 1.0))
}

/// Correlation ratio of `y` given the categories `x`.
pub fn correlation_ratio(x: &[u32], k: usize, y: &[f64]) -> Option<f64> {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let mut sums = vec![0.0; k];
    let mut counts = vec![0.0; k];
    for (&c, &v) in x.iter().zip(y) {
        sums[c as usize] += v;
        counts[c as usize] += 1.0;
    }
    let between: f64 = sums
        .iter()
        .zip(&counts)
        .filter(|(_, &c)| c > 0.0)
        .map(|(s, c)| {
            let d = s / c - mean;
            c * d * d
        })
        .sum();
    let total: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    if total <= 0.0 {
        return None;
    }
    Some(math::sqrt(between / total).clamp(0.0, 1.0))
}

/// Pairwise associations: Pearson between numeric columns, Cramér's V
/// between categorical ones, the correlation ratio across kinds. Entries
/// that are undefined for constant columns are 0 and listed in the warnings.
pub fn association_matrix(table: &RawTable) -> (Tensor2, Vec<String>) {
    let cols = &table.schema.columns;
    let d = cols.len();
    let mut m = Tensor2::zeros(d, d);
    let mut warnings = Vec::new();
    for i in 0..d {
        m.set(i, i, 1.0);
        for j in i + 1..d {
            let (a, b) = (&table.columns[i], &table.columns[j]);
            let v = match (a.as_categorical(), b.as_categorical()) {
                (Some(x), Some(y)) => cramers_v(x, cols[i].categories.len(), y, cols[j].categories.len()),
                (Some(x), None) => correlation_ratio(x, cols[i].categories.len(), b.as_numeric().expect("numeric")),
                (None, Some(y)) => correlation_ratio(y, cols[j].categories.len(), a.as_numeric().expect("numeric")),
                (None, None) => pearson(a.as_numeric().expect("numeric"), b.as_numeric().expect("numeric")),
            };
            let v = v.unwrap_or_else(|| {
                warnings.push(format!("{} / {}: undefined association set to 0", cols[i].name, cols[j].name));
                0.0
            });
            m.set(i, j, v);
            m.set(j, i, v);
        }
    }
    (m, warnings)
}

#[derive(Clone, Copy, Debug)]
pub enum Scope<'a> {
    Overall,
    AvgClient(&'a ColumnAssignment),
    AcrossClient(&'a ColumnAssignment),
}

fn client_indices(table: &RawTable, assignment: &ColumnAssignment) -> Result<Vec<Vec<usize>>, EvalError> {
    assignment
        .clients
        .iter()
        .map(|cols| {
            cols.iter()
                .map(|c| table.schema.index_of(c).ok_or_else(|| EvalError::UnknownColumn(c.clone())))
                .collect()
        })
        .collect()
}

fn block_sq(diff: &Tensor2, rows: &[usize], cols: &[usize]) -> f64 {
    let mut s = 0.0;
    for &r in rows {
        for &c in cols {
            s += diff.get(r, c) * diff.get(r, c);
        }
    }
    s
}

/// Frobenius norm of the association difference, restricted to `scope`.
pub fn diff_corr_from(diff: &Tensor2, table: &RawTable, scope: Scope<'_>) -> Result<f64, EvalError> {
    Ok(match scope {
        Scope::Overall => math::sqrt(diff.data().iter().map(|v| v * v).sum()),
        Scope::AvgClient(a) => {
            let idx = client_indices(table, a)?;
            idx.iter().map(|c| math::sqrt(block_sq(diff, c, c))).sum::<f64>() / idx.len().max(1) as f64
        }
        Scope::AcrossClient(a) => {
            let idx = client_indices(table, a)?;
            let mut s = 0.0;
            for i in 0..idx.len() {
                for j in i + 1..idx.len() {
                    s += block_sq(diff, &idx[i], &idx[j]);
                }
            }
            math::sqrt(s)
        }
    })
}

pub fn association_difference(real: &RawTable, synth: &RawTable) -> Result<(Tensor2, Vec<String>), EvalError> {
    check_schemas(real, synth)?;
    let (a, mut w) = association_matrix(real);
    let (b, w2) = association_matrix(synth);
    w.extend(w2.into_iter().map(|s| format!("synthetic: {s}")));
    Ok((a.zip_map(&b, |x, y| x - y), w))
}

pub fn diff_corr(real: &RawTable, synth: &RawTable, scope: Scope<'_>) -> Result<f64, EvalError> {
    let (d, _) = association_difference(real, synth)?;
    diff_corr_from(&d, real, scope)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub accuracy: f64,
    pub f1: f64,
    pub auc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelUtility {
    pub model: String,
    pub real: Classification,
    pub synthetic: Classification,
    /// Absolute differences, real-trained minus synthetic-trained.
    pub delta: Classification,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtilityReport {
    pub models: Vec<ModelUtility>,
    pub mean_delta: Classification,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UtilityConfig {
    pub epochs: usize,
    pub lr: f64,
    pub hidden: usize,
    pub seed: u64,
}

impl Default for UtilityConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            lr: 0.01,
            hidden: 32,
            seed: 0,
        }
    }
}

/// Feature map fitted on the real training table: one-hot categoricals,
/// standardised numerics, plus an indicator per special value of a mixed
/// column.
struct Features {
    target: usize,
    n_classes: usize,
    columns: Vec<FeatureColumn>,
    width: usize,
}

enum FeatureColumn {
    OneHot { column: usize, k: usize },
    Numeric { column: usize, mean: f64, std: f64, specials: Vec<f64> },
}

impl Features {
    fn fit(table: &RawTable, target: &str) -> Result<Self, EvalError> {
        let t = table
            .schema
            .index_of(target)
            .ok_or_else(|| EvalError::UnknownColumn(target.into()))?;
        let tcol = &table.schema.columns[t];
        if tcol.kind != ColumnKind::Categorical {
            return Err(EvalError::NotApplicable("target column is not categorical"));
        }
        let mut columns = Vec::new();
        let mut width = 0;
        for (j, col) in table.schema.columns.iter().enumerate() {
            if j == t {
                continue;
            }
            match col.kind {
                ColumnKind::Categorical => {
                    columns.push(FeatureColumn::OneHot {
                        column: j,
                        k: col.categories.len(),
                    });
                    width += col.categories.len();
                }
                _ => {
                    let v = table.columns[j].as_numeric().expect("numeric");
                    let n = v.len() as f64;
                    let mean = v.iter().sum::<f64>() / n;
                    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
                    let std = if var > 0.0 { math::sqrt(var) } else { 1.0 };
                    let specials = col.mixed_categorical_values.clone();
                    width += 1 + specials.len();
                    columns.push(FeatureColumn::Numeric {
                        column: j,
                        mean,
                        std,
                        specials,
                    });
                }
            }
        }
        Ok(Self {
            target: t,
            n_classes: tcol.categories.len(),
            columns,
            width,
        })
    }

    fn transform(&self, table: &RawTable) -> (Tensor2, Vec<usize>) {
        let n = table.n_rows();
        let mut x = Tensor2::zeros(n, self.width);
        for r in 0..n {
            let mut c = 0;
            for f in &self.columns {
                match f {
                    FeatureColumn::OneHot { column, k } => {
                        let v = table.columns[*column].as_categorical().expect("categorical")[r];
                        x.set(r, c + v as usize, 1.0);
                        c += k;
                    }
                    FeatureColumn::Numeric {
                        column,
                        mean,
                        std,
                        specials,
                    } => {
                        let v = table.columns[*column].as_numeric().expect("numeric")[r];
                        x.set(r, c, (v - mean) / std);
                        for (i, s) in specials.iter().enumerate() {
                            if (v - s).abs() <= crate::encode::SPECIAL_TOL * s.abs().max(1.0) {
                                x.set(r, c + 1 + i, 1.0);
                            }
                        }
                        c += 1 + specials.len();
                    }
                }
            }
        }
        let y = table.columns[self.target]
            .as_categorical()
            .expect("categorical")
            .iter()
            .map(|&v| v as usize)
            .collect();
        (x, y)
    }
}

fn classifier_spec(input: usize, classes: usize, hidden: Option<usize>) -> NetSpec {
    let blocks = match hidden {
        None => vec![BlockSpec::linear(input, classes)],
        Some(h) => vec![
            BlockSpec {
                layers: vec![LayerSpec::Dense { input, output: h }, LayerSpec::Relu],
                residual: Residual::None,
            },
            BlockSpec::linear(h, classes),
        ],
    };
    NetSpec {
        input_dim: input,
        blocks,
    }
}

fn train_classifier(x: &Tensor2, y: &[usize], classes: usize, hidden: Option<usize>, cfg: &UtilityConfig) -> Result<Net, EvalError> {
    let label = if hidden.is_some() { "utility:mlp" } else { "utility:logreg" };
    let mut rng = stream(cfg.seed, label, 0);
    let mut net = Net::new(classifier_spec(x.cols(), classes, hidden), &mut rng)?;
    let mut state = AdamState::new(net.num_params());
    let adam = AdamConfig {
        lr: cfg.lr,
        beta1: 0.9,
        beta2: 0.999,
        ..AdamConfig::default()
    };
    let targets: Vec<(usize, usize, usize)> = y.iter().map(|&c| (0, classes, c)).collect();
    for _ in 0..cfg.epochs {
        let mut g = Graph::new();
        let input = g.constant(x.clone());
        let built = net.build(&mut g, input, Mode::Train, &mut rng, true)?;
        let loss = conditional_cross_entropy(&mut g, built.output, &targets)?;
        let grads = g.backward_scalar(loss, &built.params)?;
        let buf = net.grad_buffer(&grads);
        net.adam_step(&buf, &mut state, &adam)?;
    }
    Ok(net)
}

fn predict_proba(net: &mut Net, x: &Tensor2) -> Result<Tensor2, EvalError> {
    let mut rng = stream(0, "utility:predict", 0);
    let mut g = Graph::new();
    let input = g.constant(x.clone());
    let built = net.build(&mut g, input, Mode::Eval, &mut rng, false)?;
    let logits = g.value(built.output);
    let mut p = logits.clone();
    for r in 0..p.rows() {
        let row = p.row_mut(r);
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for v in row.iter_mut() {
            *v = math::exp(*v - m);
            s += *v;
        }
        row.iter_mut().for_each(|v| *v /= s);
    }
    Ok(p)
}

/// Area under the ROC curve of `scores` for the positive labels, with
/// tied scores sharing rank.
pub fn auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if positive[k] {
                rank_sum += avg;
            }
        }
        i = j + 1;
    }
    let np = n_pos as f64;
    Some((rank_sum - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}

/// Accuracy, macro-F1 over classes present in the labels or predictions,
/// and one-vs-rest macro AUC over classes present in the labels.
pub fn classification_metrics(proba: &Tensor2, y: &[usize]) -> Classification {
    let k = proba.cols();
    let pred: Vec<usize> = (0..proba.rows()).map(|r| crate::nn::argmax(proba.row(r))).collect();
    let accuracy = pred.iter().zip(y).filter(|(a, b)| a == b).count() as f64 / y.len().max(1) as f64;
    let mut f1s = Vec::new();
    let mut aucs = Vec::new();
    for c in 0..k {
        let tp = pred.iter().zip(y).filter(|(&p, &t)| p == c && t == c).count() as f64;
        let fp = pred.iter().zip(y).filter(|(&p, &t)| p == c && t != c).count() as f64;
        let fn_ = pred.iter().zip(y).filter(|(&p, &t)| p != c && t == c).count() as f64;
        if tp + fp + fn_ > 0.0 {
            f1s.push(2.0 * tp / (2.0 * tp + fp + fn_));
        }
        let scores: Vec<f64> = (0..proba.rows()).map(|r| proba.get(r, c)).collect();
        let pos: Vec<bool> = y.iter().map(|&t| t == c).collect();
        if let Some(a) = auc(&scores, &pos) {
            aucs.push(a);
        }
    }
    let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    Classification {
        accuracy,
        f1: mean(&f1s),
        auc: mean(&aucs),
    }
}

/// Trains logistic regression and a one-hidden-layer MLP on the real and
/// on the synthetic training table and compares them on `test`.
pub fn ml_utility(
    real_train: &RawTable,
    synth_train: &RawTable,
    test: &RawTable,
    target: &str,
    cfg: &UtilityConfig,
) -> Result<UtilityReport, EvalError> {
    check_schemas(real_train, synth_train)?;
    check_schemas(real_train, test)?;
    let features = Features::fit(real_train, target)?;
    let (xr, yr) = features.transform(real_train);
    let (xs, ys) = features.transform(synth_train);
    let (xt, yt) = features.transform(test);
    let distinct = |y: &[usize]| y.iter().collect::<alloc::collections::BTreeSet<_>>().len();
    if distinct(&yr) < 2 || distinct(&yt) < 2 {
        return Err(EvalError::SingleClass(target.into()));
    }
    let mut models = Vec::new();
    for (name, hidden) in [("logistic_regression", None), ("mlp", Some(cfg.hidden))] {
        let mut nr = train_classifier(&xr, &yr, features.n_classes, hidden, cfg)?;
        let mut ns = train_classifier(&xs, &ys, features.n_classes, hidden, cfg)?;
        let real = classification_metrics(&predict_proba(&mut nr, &xt)?, &yt);
        let synthetic = classification_metrics(&predict_proba(&mut ns, &xt)?, &yt);
        models.push(ModelUtility {
            model: name.into(),
            real,
            synthetic,
            delta: Classification {
                accuracy: (real.accuracy - synthetic.accuracy).abs(),
                f1: (real.f1 - synthetic.f1).abs(),
                auc: (real.auc - synthetic.auc).abs(),
            },
        });
    }
    let n = models.len() as f64;
    let mean_delta = Classification {
        accuracy: models.iter().map(|m| m.delta.accuracy).sum::<f64>() / n,
        f1: models.iter().map(|m| m.delta.f1).sum::<f64>() / n,
        auc: models.iter().map(|m| m.delta.auc).sum::<f64>() / n,
    };
    Ok(UtilityReport { models, mean_delta })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub avg_jsd: Option<f64>,
    pub avg_wd: Option<f64>,
    pub diff_corr: f64,
    pub avg_client_corr: Option<f64>,
    pub across_client_corr: Option<f64>,
    pub ml_utility: Option<UtilityReport>,
    pub warnings: Vec<String>,
}

/// Utility inputs: held-out real rows and the target column.
pub struct UtilityInput<'a> {
    pub test: &'a RawTable,
    pub target: &'a str,
    pub config: UtilityConfig,
}

pub fn evaluate(
    real: &RawTable,
    synth: &RawTable,
    assignment: Option<&ColumnAssignment>,
    utility: Option<UtilityInput<'_>>,
) -> Result<MetricReport, EvalError> {
    let avg_jsd = avg_jsd(real, synth)?;
    let (avg_wd, mut warnings) = avg_wd(real, synth)?;
    let (diff, w) = association_difference(real, synth)?;
    warnings.extend(w);
    let diff_corr = diff_corr_from(&diff, real, Scope::Overall)?;
    let (avg_client_corr, across_client_corr) = match assignment {
        Some(a) => (
            Some(diff_corr_from(&diff, real, Scope::AvgClient(a))?),
            Some(diff_corr_from(&diff, real, Scope::AcrossClient(a))?),
        ),
        None => (None, None),
    };
    let ml_utility = match utility {
        Some(u) => Some(ml_utility(real, synth, u.test, u.target, &u.config)?),
        None => None,
    };
    Ok(MetricReport {
        avg_jsd,
        avg_wd,
        diff_corr,
        avg_client_corr,
        across_client_corr,
        ml_utility,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsd_examples() {
        assert_eq!(jsd(&[0.3, 0.7], &[0.3, 0.7]), 0.0);
        assert!((jsd(&[1.0, 0.0], &[0.0, 1.0]) - 1.0).abs() < 1e-12);
        // 0.25 log2(2/3) + 0.25 + 0.5 log2(4/3)
        let oracle = 0.25 * math::log2(2.0 / 3.0) + 0.25 + 0.5 * math::log2(4.0 / 3.0);
        assert!((jsd(&[0.5, 0.5], &[1.0, 0.0]) - oracle).abs() < 1e-12);
        assert!((oracle - 0.3113).abs() < 1e-4);
    }

    #[test]
    fn wasserstein_examples() {
        assert_eq!(wasserstein_1(&[0.0, 1.0], &[0.0, 1.0]), 0.0);
        assert!((wasserstein_1(&[0.0], &[1.0]) - 1.0).abs() < 1e-15);
        assert!((wasserstein_1(&[0.0, 0.5], &[0.25, 0.75]) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn associations() {
        let x = [0u32, 0, 1, 1];
        assert!((cramers_v(&x, 2, &x, 2).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cramers_v(&[0, 0], 2, &[0, 1], 2), None);
        assert!((correlation_ratio(&x, 2, &[1.0, 1.0, 3.0, 3.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]), Some(1.0));
        assert_eq!(auc(&[0.5, 0.5], &[false, true]), Some(0.5));
        assert_eq!(auc(&[0.5], &[true]), None);
    }
}
