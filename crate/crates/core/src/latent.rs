//! Hard state encoders, latent world models and their Lipschitz constants.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::wasserstein;
use crate::mdp::{FiniteMdp, MdpFile, StationaryDist, TabularPolicy};

/// Deterministic, surjective map from ground states to latent states.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "EncoderFile", into = "EncoderFile")]
pub struct Encoder {
    mapping: Vec<usize>,
    n_latent: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EncoderFile {
    pub mapping: Vec<usize>,
    pub n_latent: usize,
}

impl TryFrom<EncoderFile> for Encoder {
    type Error = Error;
    fn try_from(f: EncoderFile) -> Result<Self> {
        Encoder::new(f.mapping, f.n_latent)
    }
}

impl From<Encoder> for EncoderFile {
    fn from(e: Encoder) -> Self {
        EncoderFile {
            mapping: e.mapping,
            n_latent: e.n_latent,
        }
    }
}

impl Encoder {
    pub fn new(mapping: Vec<usize>, n_latent: usize) -> Result<Self> {
        let mut hit = vec![false; n_latent];
        for (s, &z) in mapping.iter().enumerate() {
            if z >= n_latent {
                return Err(Error::invalid(
                    "encoder",
                    format!("state {s} maps to {z} >= {n_latent}"),
                ));
            }
            hit[z] = true;
        }
        if let Some(z) = hit.iter().position(|h| !h) {
            return Err(Error::invalid(
                "encoder",
                format!("latent state {z} is empty"),
            ));
        }
        Ok(Self { mapping, n_latent })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            mapping: (0..n).collect(),
            n_latent: n,
        }
    }

    pub fn n_states(&self) -> usize {
        self.mapping.len()
    }

    pub fn n_latent(&self) -> usize {
        self.n_latent
    }

    #[inline]
    pub fn map(&self, s: usize) -> usize {
        self.mapping[s]
    }

    pub fn mapping(&self) -> &[usize] {
        &self.mapping
    }

    /// Ground states belonging to latent `z`.
    pub fn block(&self, z: usize) -> impl Iterator<Item = usize> + '_ {
        self.mapping
            .iter()
            .enumerate()
            .filter(move |(_, &m)| m == z)
            .map(|(s, _)| s)
    }

    /// Returns the latent reset state when the reset state is alone in its block.
    pub fn aligned_reset(&self, mdp: &FiniteMdp) -> Result<usize> {
        let reset = mdp
            .reset_state()
            .ok_or_else(|| Error::precondition("reset alignment", "ground mdp is not episodic"))?;
        let z = self.map(reset);
        if let Some(s) = self.block(z).find(|&s| s != reset) {
            return Err(Error::precondition(
                "reset alignment",
                format!("state {s} shares the latent reset state {z}"),
            ));
        }
        Ok(z)
    }

    pub(crate) fn check_mdp(&self, mdp: &FiniteMdp) -> Result<()> {
        if self.n_states() != mdp.n_states() {
            return Err(Error::DimensionMismatch(format!(
                "encoder covers {} states, mdp has {}",
                self.n_states(),
                mdp.n_states()
            )));
        }
        Ok(())
    }
}

/// Pushes a measure over ground states forward through the encoder.
pub fn pushforward(encoder: &Encoder, ground: &[f64]) -> Result<Vec<f64>> {
    if ground.len() != encoder.n_states() {
        return Err(Error::DimensionMismatch(format!(
            "distribution over {} states, encoder over {}",
            ground.len(),
            encoder.n_states()
        )));
    }
    let mut out = vec![0.0; encoder.n_latent()];
    for (s, &p) in ground.iter().enumerate() {
        out[encoder.map(s)] += p;
    }
    Ok(out)
}

/// The policy `latent_policy ∘ encoder` on ground states.
pub fn compose(latent_policy: &TabularPolicy, encoder: &Encoder) -> Result<TabularPolicy> {
    if latent_policy.n_states() != encoder.n_latent() {
        return Err(Error::DimensionMismatch(format!(
            "latent policy over {} states, encoder has {} latents",
            latent_policy.n_states(),
            encoder.n_latent()
        )));
    }
    let probs = encoder
        .mapping()
        .iter()
        .flat_map(|&z| latent_policy.row(z).iter().copied())
        .collect();
    TabularPolicy::new(encoder.n_states(), latent_policy.n_actions(), probs)
}

/// Symmetric latent metric with zero diagonal satisfying the triangle inequality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Metric {
    n: usize,
    d: Vec<f64>,
    discrete: bool,
}

impl Metric {
    pub fn new(n: usize, d: Vec<f64>) -> Result<Self> {
        if d.len() != n * n {
            return Err(Error::DimensionMismatch(format!(
                "metric has {} entries",
                d.len()
            )));
        }
        let tol = 1e-12;
        for i in 0..n {
            if d[i * n + i] != 0.0 {
                return Err(Error::invalid("metric", format!("d({i},{i}) != 0")));
            }
            for j in 0..n {
                let x = d[i * n + j];
                if !x.is_finite() || x < 0.0 {
                    return Err(Error::invalid("metric", format!("d({i},{j}) = {x}")));
                }
                if x != d[j * n + i] {
                    return Err(Error::invalid(
                        "metric",
                        format!("not symmetric at ({i},{j})"),
                    ));
                }
                for k in 0..n {
                    if x > d[i * n + k] + d[k * n + j] + tol {
                        return Err(Error::invalid(
                            "metric",
                            format!("triangle inequality fails for ({i},{k},{j})"),
                        ));
                    }
                }
            }
        }
        let discrete = (0..n * n).all(|k| d[k] == if k / n == k % n { 0.0 } else { 1.0 });
        Ok(Self { n, d, discrete })
    }

    pub fn discrete(n: usize) -> Self {
        let d = (0..n * n)
            .map(|k| if k / n == k % n { 0.0 } else { 1.0 })
            .collect();
        Self {
            n,
            d,
            discrete: true,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn d(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }

    pub fn is_discrete(&self) -> bool {
        self.discrete
    }

    pub fn max_entry(&self) -> f64 {
        self.d.iter().fold(0.0, |m, &x| m.max(x))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.d
    }
}

impl TryFrom<Vec<Vec<f64>>> for Metric {
    type Error = Error;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::DimensionMismatch("metric must be square".into()));
        }
        Metric::new(n, rows.concat())
    }
}

impl From<Metric> for Vec<Vec<f64>> {
    fn from(m: Metric) -> Self {
        m.d.chunks(m.n.max(1)).map(<[f64]>::to_vec).collect()
    }
}

/// A world model: an MDP over latent states paired with a latent metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LatentFile", into = "LatentFile")]
pub struct LatentMdp {
    model: FiniteMdp,
    metric: Metric,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatentFile {
    #[serde(flatten)]
    pub mdp: MdpFile,
    pub metric: Vec<Vec<f64>>,
}

impl TryFrom<LatentFile> for LatentMdp {
    type Error = Error;
    fn try_from(f: LatentFile) -> Result<Self> {
        LatentMdp::new(FiniteMdp::try_from(f.mdp)?, Metric::try_from(f.metric)?)
    }
}

impl From<LatentMdp> for LatentFile {
    fn from(l: LatentMdp) -> Self {
        LatentFile {
            mdp: l.model.into(),
            metric: l.metric.into(),
        }
    }
}

impl LatentMdp {
    pub fn new(model: FiniteMdp, metric: Metric) -> Result<Self> {
        if metric.len() != model.n_states() {
            return Err(Error::DimensionMismatch(format!(
                "metric over {} points, model has {} latent states",
                metric.len(),
                model.n_states()
            )));
        }
        Ok(Self { model, metric })
    }

    pub fn model(&self) -> &FiniteMdp {
        &self.model
    }

    pub fn metric(&self) -> &Metric {
        &self.metric
    }

    pub fn n_latent(&self) -> usize {
        self.model.n_states()
    }

    pub fn n_actions(&self) -> usize {
        self.model.n_actions()
    }

    pub fn discount(&self) -> f64 {
        self.model.discount()
    }

    #[inline]
    pub fn p(&self, z: usize, a: usize, z_next: usize) -> f64 {
        self.model.p(z, a, z_next)
    }

    #[inline]
    pub fn row(&self, z: usize, a: usize) -> &[f64] {
        self.model.row(z, a)
    }

    #[inline]
    pub fn r(&self, z: usize, a: usize) -> f64 {
        self.model.r(z, a)
    }

    pub fn with_model(&self, model: FiniteMdp) -> Result<Self> {
        Self::new(model, self.metric.clone())
    }

    pub(crate) fn check_pair(&self, mdp: &FiniteMdp, encoder: &Encoder) -> Result<()> {
        encoder.check_mdp(mdp)?;
        if encoder.n_latent() != self.n_latent() || mdp.n_actions() != self.n_actions() {
            return Err(Error::DimensionMismatch(format!(
                "latent model is {}x{}, encoder/mdp expect {}x{}",
                self.n_latent(),
                self.n_actions(),
                encoder.n_latent(),
                mdp.n_actions()
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Weighting-conditional aggregate of the ground model over each latent block,
/// with the discrete metric.
pub fn fit_latent_model(
    mdp: &FiniteMdp,
    encoder: &Encoder,
    weighting: &StationaryDist,
) -> Result<LatentMdp> {
    fit_latent_model_with_metric(
        mdp,
        encoder,
        weighting,
        Metric::discrete(encoder.n_latent()),
    )
}

pub fn fit_latent_model_with_metric(
    mdp: &FiniteMdp,
    encoder: &Encoder,
    weighting: &StationaryDist,
    metric: Metric,
) -> Result<LatentMdp> {
    encoder.check_mdp(mdp)?;
    if weighting.len() != mdp.n_states() {
        return Err(Error::DimensionMismatch("weighting length".into()));
    }
    let (k, na) = (encoder.n_latent(), mdp.n_actions());
    let mass = pushforward(encoder, weighting.as_slice())?;
    if let Some(z) = mass.iter().position(|&m| m <= 0.0) {
        return Err(Error::ZeroMassBlock(z));
    }
    let mut reward = vec![0.0; k * na];
    let mut transition = vec![0.0; k * na * k];
    for s in 0..mdp.n_states() {
        let z = encoder.map(s);
        let w = weighting.xi[s] / mass[z];
        if w == 0.0 {
            continue;
        }
        for a in 0..na {
            reward[z * na + a] += w * mdp.r(s, a);
            let out = &mut transition[(z * na + a) * k..][..k];
            for (t, &p) in mdp.row(s, a).iter().enumerate() {
                out[encoder.map(t)] += w * p;
            }
        }
    }
    for row in transition.chunks_mut(k) {
        let total: f64 = row.iter().sum();
        row.iter_mut().for_each(|x| *x /= total);
    }
    let reset = mdp
        .reset_state()
        .and_then(|_| encoder.aligned_reset(mdp).ok());
    let model = FiniteMdp::new(
        k,
        na,
        transition,
        reward,
        encoder.map(mdp.initial_state()),
        mdp.discount(),
        reset,
    )?;
    LatentMdp::new(model, metric)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzReport {
    pub k_r: f64,
    pub k_p: f64,
    pub k_v: f64,
    pub policy_id: String,
}

impl LipschitzReport {
    pub fn k_v_from(k_r: f64, k_p: f64, discount: f64) -> f64 {
        if discount * k_p < 1.0 {
            k_r / (1.0 - discount * k_p)
        } else {
            f64::INFINITY
        }
    }
}

/// Policy-mixed reward and next-latent distribution at `z`.
pub(crate) fn mixed(latent: &LatentMdp, policy: &TabularPolicy, z: usize) -> (f64, Vec<f64>) {
    let k = latent.n_latent();
    let mut r = 0.0;
    let mut p = vec![0.0; k];
    for (a, &pi) in policy.row(z).iter().enumerate() {
        if pi == 0.0 {
            continue;
        }
        r += pi * latent.r(z, a);
        for (o, &q) in p.iter_mut().zip(latent.row(z, a)) {
            *o += pi * q;
        }
    }
    (r, p)
}

/// Smallest reward and transition Lipschitz constants of the latent model
/// under `latent_policy`, by exhaustive pairwise maximization.
pub fn lipschitz_constants(
    latent: &LatentMdp,
    latent_policy: &TabularPolicy,
) -> Result<LipschitzReport> {
    latent.model().check_policy(latent_policy)?;
    let k = latent.n_latent();
    let mix: Vec<(f64, Vec<f64>)> = (0..k).map(|z| mixed(latent, latent_policy, z)).collect();
    let (mut k_r, mut k_p) = (0.0_f64, 0.0_f64);
    for x in 0..k {
        for y in x + 1..k {
            let dr = (mix[x].0 - mix[y].0).abs();
            let dp = wasserstein(&mix[x].1, &mix[y].1, latent.metric())?;
            let d = latent.metric().d(x, y);
            if d == 0.0 {
                if dr > 1e-12 || dp > 1e-12 {
                    return Err(Error::MetricIdentifiesDistinct(x, y));
                }
                continue;
            }
            k_r = k_r.max(dr / d);
            k_p = k_p.max(dp / d);
        }
    }
    Ok(LipschitzReport {
        k_r,
        k_p,
        k_v: LipschitzReport::k_v_from(k_r, k_p, latent.discount()),
        policy_id: latent_policy.fingerprint(),
    })
}
