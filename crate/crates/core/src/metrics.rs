//! Network-level quantities built from per-site fields: strongest-server and
//! total-power aggregation, SINR, interference, Shannon rate, and the
//! summary statistics reported for a deployment.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::propagation::{fields_for_sites, PowerField, RadioConfig};
use crate::scene::{make_grid, ReceiverGrid, Scene, Site};

/// How the powers of several transmitters combine at a receiver.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    /// Strongest server only.
    #[default]
    Max,
    /// All received power treated as useful signal.
    Sum,
}

impl Aggregation {
    /// Folds one more transmitter's power into an aggregate value.
    #[inline]
    pub fn combine(self, acc: f64, p: f64) -> f64 {
        match self {
            Aggregation::Max => acc.max(p),
            Aggregation::Sum => acc + p,
        }
    }
}

/// Selected and fixed transmitters, as candidate indices.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransmitterSet {
    pub selected: Vec<usize>,
    pub fixed: Vec<usize>,
}

impl TransmitterSet {
    pub fn new(selected: Vec<usize>, fixed: Vec<usize>) -> Self {
        TransmitterSet { selected, fixed }
    }

    pub fn selected(indices: impl Into<Vec<usize>>) -> Self {
        TransmitterSet {
            selected: indices.into(),
            fixed: Vec::new(),
        }
    }

    /// Fixed transmitters first, then selected ones in selection order.
    pub fn all(&self) -> impl Iterator<Item = usize> + '_ {
        self.fixed.iter().chain(&self.selected).copied()
    }

    pub fn len(&self) -> usize {
        self.fixed.len() + self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self, n_candidates: usize) -> Result<()> {
        let mut seen = vec![false; n_candidates];
        for i in self.all() {
            if i >= n_candidates {
                return Err(Error::validation(format!(
                    "transmitter index {i} out of range ({n_candidates} candidates)"
                )));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::validation(format!(
                    "transmitter index {i} appears twice"
                )));
            }
        }
        Ok(())
    }
}

fn powers_at<'a>(
    cell: usize,
    set: &'a TransmitterSet,
    fields: &'a [PowerField],
) -> impl Iterator<Item = f64> + 'a {
    set.all().map(move |t| fields[t].values[cell])
}

fn max_and_sum(powers: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    powers.fold(None, |acc, p| match acc {
        None => Some((p, p)),
        Some((m, s)) => Some((m.max(p), s + p)),
    })
}

/// SINR with unit noise from linear powers.
pub fn sinr_of(powers: &[f64]) -> Result<f64> {
    let (m, s) = max_and_sum(powers.iter().copied()).ok_or(Error::EmptyTransmitterSet)?;
    Ok(m / (s - m + 1.0))
}

/// Non-serving power (`sum - max`), clamped at zero against rounding.
pub fn interference_of(powers: &[f64]) -> Result<f64> {
    let (m, s) = max_and_sum(powers.iter().copied()).ok_or(Error::EmptyTransmitterSet)?;
    Ok((s - m).max(0.0))
}

pub fn aggregate(
    cell: usize,
    set: &TransmitterSet,
    fields: &[PowerField],
    mode: Aggregation,
) -> Result<f64> {
    let (m, s) = max_and_sum(powers_at(cell, set, fields)).ok_or(Error::EmptyTransmitterSet)?;
    Ok(match mode {
        Aggregation::Max => m,
        Aggregation::Sum => s,
    })
}

pub fn sinr(cell: usize, set: &TransmitterSet, fields: &[PowerField]) -> Result<f64> {
    let (m, s) = max_and_sum(powers_at(cell, set, fields)).ok_or(Error::EmptyTransmitterSet)?;
    Ok(m / (s - m + 1.0))
}

pub fn interference(cell: usize, set: &TransmitterSet, fields: &[PowerField]) -> Result<f64> {
    let (m, s) = max_and_sum(powers_at(cell, set, fields)).ok_or(Error::EmptyTransmitterSet)?;
    Ok((s - m).max(0.0))
}

/// Achievable rate `B log2(1 + q / gap)` in bit/s.
pub fn shannon_rate(q: f64, radio: &RadioConfig) -> f64 {
    radio.bandwidth * (1.0 + q / radio.gap).log2()
}

/// Percentile `p` in `[0, 100]` with inclusive linear interpolation between
/// order statistics (position `p/100 * (n-1)` in the sorted sample).
pub fn percentile(values: &[f64], p: f64) -> f64 {
    assert!(!values.is_empty(), "percentile of empty sample");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = (p / 100.0).clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    v[lo] + frac * (v[hi] - v[lo])
}

/// Mean and population standard deviation.
fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Interference statistics in nW.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterferenceStats {
    pub mean_nw: f64,
    pub std_nw: f64,
    pub max_nw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mean_rate: f64,
    pub std_rate: f64,
    pub max_rate: f64,
    pub edge_rate_p5: f64,
    /// Absent under total-power aggregation.
    pub interference: Option<InterferenceStats>,
    #[serde(skip)]
    pub rate_raster: Vec<f64>,
    #[serde(skip)]
    pub interference_raster: Option<Vec<f64>>,
}

impl MetricsReport {
    /// Statistics over a rate raster (bit/s) and optional interference raster (nW).
    pub fn from_rasters(rate: Vec<f64>, interference_nw: Option<Vec<f64>>) -> Result<Self> {
        if rate.is_empty() {
            return Err(Error::validation("empty raster"));
        }
        let (mean_rate, std_rate) = mean_std(&rate);
        let max_rate = rate.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let edge_rate_p5 = percentile(&rate, 5.0);
        let interference = interference_nw.as_ref().map(|r| {
            let (mean_nw, std_nw) = mean_std(r);
            InterferenceStats {
                mean_nw,
                std_nw,
                max_nw: r.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            }
        });
        Ok(MetricsReport {
            mean_rate,
            std_rate,
            max_rate,
            edge_rate_p5,
            interference,
            rate_raster: rate,
            interference_raster: interference_nw,
        })
    }

    /// Arithmetic mean of each statistic across reports; rasters are dropped.
    pub fn average(reports: &[MetricsReport]) -> Result<Self> {
        if reports.is_empty() {
            return Err(Error::validation("no reports to average"));
        }
        let n = reports.len() as f64;
        let avg = |f: &dyn Fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        let interference = if reports.iter().all(|r| r.interference.is_some()) {
            let i = |r: &MetricsReport| r.interference.clone().expect("checked");
            Some(InterferenceStats {
                mean_nw: avg(&|r| i(r).mean_nw),
                std_nw: avg(&|r| i(r).std_nw),
                max_nw: avg(&|r| i(r).max_nw),
            })
        } else {
            None
        };
        Ok(MetricsReport {
            mean_rate: avg(&|r| r.mean_rate),
            std_rate: avg(&|r| r.std_rate),
            max_rate: avg(&|r| r.max_rate),
            edge_rate_p5: avg(&|r| r.edge_rate_p5),
            interference,
            rate_raster: Vec::new(),
            interference_raster: None,
        })
    }
}

/// Linear SNR (unit noise) to nanowatts at the thermal noise floor.
pub fn snr_to_nanowatts(snr: f64, radio: &RadioConfig) -> f64 {
    snr * radio.noise_floor_watts() * 1e9
}

/// Per-cell rate and interference rasters for a transmitter set.
pub fn rasters(
    set: &TransmitterSet,
    fields: &[PowerField],
    radio: &RadioConfig,
    mode: Aggregation,
) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    if set.is_empty() {
        return Err(Error::EmptyTransmitterSet);
    }
    let n_cells = fields[0].values.len();
    let mut rate = Vec::with_capacity(n_cells);
    let mut interf = Vec::with_capacity(n_cells);
    for y in 0..n_cells {
        let (m, s) = max_and_sum(powers_at(y, set, fields)).expect("non-empty set");
        match mode {
            Aggregation::Max => {
                rate.push(shannon_rate(m / (s - m + 1.0), radio));
                interf.push(snr_to_nanowatts((s - m).max(0.0), radio));
            }
            Aggregation::Sum => rate.push(shannon_rate(s, radio)),
        }
    }
    Ok(match mode {
        Aggregation::Max => (rate, Some(interf)),
        Aggregation::Sum => (rate, None),
    })
}

pub fn report(
    set: &TransmitterSet,
    fields: &[PowerField],
    radio: &RadioConfig,
    mode: Aggregation,
) -> Result<MetricsReport> {
    let (rate, interf) = rasters(set, fields, radio, mode)?;
    MetricsReport::from_rasters(rate, interf)
}

/// Cell-wise mean of equally sized rasters.
pub fn average_rasters(rasters: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = rasters
        .first()
        .ok_or_else(|| Error::validation("no rasters to average"))?;
    if rasters.iter().any(|r| r.len() != first.len()) {
        return Err(Error::validation("rasters differ in size"));
    }
    let n = rasters.len() as f64;
    Ok((0..first.len())
        .map(|i| rasters.iter().map(|r| r[i]).sum::<f64>() / n)
        .collect())
}

/// Report on rasters averaged over several receiver heights. Fields are
/// recomputed at each height for the given transmitter sites.
pub fn multi_height_report(
    heights: &[f64],
    scene: &Scene,
    sites: &[Site],
    radio: &RadioConfig,
    mode: Aggregation,
) -> Result<MetricsReport> {
    if heights.is_empty() {
        return Err(Error::validation("height list is empty"));
    }
    if sites.is_empty() {
        return Err(Error::EmptyTransmitterSet);
    }
    let set = TransmitterSet::selected((0..sites.len()).collect::<Vec<_>>());
    let mut rates = Vec::with_capacity(heights.len());
    let mut interfs = Vec::with_capacity(heights.len());
    for &h in heights {
        let s = scene.at_receiver_height(h)?;
        let grid: ReceiverGrid = make_grid(&s)?;
        let fields = fields_for_sites(sites, &s, &grid, radio, None)?;
        let (r, i) = rasters(&set, &fields, radio, mode)?;
        rates.push(r);
        interfs.extend(i);
    }
    let rate = average_rasters(&rates)?;
    let interf = match mode {
        Aggregation::Max => Some(average_rasters(&interfs)?),
        Aggregation::Sum => None,
    };
    MetricsReport::from_rasters(rate, interf)
}
