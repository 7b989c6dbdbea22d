//! Depth sweep of measured update cost on fully connected stacks.

use std::fmt::Write as _;

use brpsnn::data::{Dataset, Sample};
use brpsnn::encode::EncoderConfig;
use brpsnn::learn::{train_epoch, FeedbackScale, Model, TpMode, TrainConfig};
use brpsnn::rng::{stream, Purpose};
use brpsnn::{LifParams, Network, Shape, Topology};
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchSpec {
    pub depths: Vec<usize>,
    pub width: usize,
    pub classes: usize,
    pub samples: usize,
    pub t_window: usize,
    pub seed: u64,
}

impl Default for BenchSpec {
    fn default() -> Self {
        Self {
            depths: vec![2, 4, 8],
            width: 64,
            classes: 10,
            samples: 20,
            t_window: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub mode: TpMode,
    pub depth: usize,
    /// Measured over one epoch, divided by the sample count.
    pub update_ops: u64,
    pub forward_ops: u64,
    /// `update_ops` relative to brp at the same depth.
    pub ratio_to_brp: f64,
}

/// Least-squares line `y = a·x + b` and its coefficient of determination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineFit {
    pub a: f64,
    pub b: f64,
    pub r2: f64,
}

pub fn affine_fit(xs: &[f64], ys: &[f64]) -> AffineFit {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let a = sxy / sxx;
    let b = my - a * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - a * x - b).powi(2)).sum();
    let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    AffineFit { a, b, r2 }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub brp_fit: AffineFit,
}

impl BenchReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("mode,depth,update_ops,forward_ops,ratio_to_brp\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.6}",
                r.mode, r.depth, r.update_ops, r.forward_ops, r.ratio_to_brp
            );
        }
        out
    }

    pub fn ratios(&self, mode: TpMode) -> Vec<f64> {
        self.rows.iter().filter(|r| r.mode == mode).map(|r| r.ratio_to_brp).collect()
    }
}

fn stack(spec: &BenchSpec, depth: usize) -> brpsnn::Result<Network> {
    let mut tokens = vec![format!("FC{}", spec.width); depth - 1];
    tokens.push(format!("FC{}", spec.classes));
    let t = Topology::parse(&tokens.join("-"))?;
    Network::new(
        &t,
        Shape::flat(spec.width),
        LifParams::default(),
        2.0,
        &mut stream(spec.seed, Purpose::Init, 0, depth as u64),
    )
}

pub fn run_bench(spec: &BenchSpec) -> brpsnn::Result<BenchReport> {
    if spec.depths.is_empty() || spec.depths.contains(&0) || spec.samples == 0 || spec.classes == 0 {
        return Err(brpsnn::Error::Contract(
            "bench needs non-empty positive depths, samples and classes".into(),
        ));
    }
    let mut rng = stream(spec.seed, Purpose::Synth, 0, 0);
    let samples = (0..spec.samples)
        .map(|_| Sample::Analog((0..spec.width).map(|_| rng.gen_range(0.0..1.0)).collect()))
        .collect();
    let labels = (0..spec.samples).map(|i| i % spec.classes).collect();
    let ds = Dataset::new(Shape::flat(spec.width), spec.classes, samples, labels)?;
    let mut rows = Vec::new();
    for mode in TpMode::ALL {
        for &depth in &spec.depths {
            let mut model = Model::new(stack(spec, depth)?, spec.seed, FeedbackScale::Unit);
            let cfg = TrainConfig {
                mode,
                batch: spec.samples,
                encoder: EncoderConfig {
                    t_window: spec.t_window,
                    ..EncoderConfig::default()
                },
                seed: spec.seed,
                ..TrainConfig::default()
            };
            let st = train_epoch(&mut model, &ds, &cfg, 0)?;
            let n = spec.samples as u64;
            rows.push(BenchRow {
                mode,
                depth,
                update_ops: st.ops.update_total() / n,
                forward_ops: st.ops.forward_total() / n,
                ratio_to_brp: 0.0,
            });
        }
    }
    let brp: Vec<(usize, u64)> = rows
        .iter()
        .filter(|r| r.mode == TpMode::Brp)
        .map(|r| (r.depth, r.update_ops))
        .collect();
    for r in rows.iter_mut() {
        let base = brp.iter().find(|(d, _)| *d == r.depth).map(|x| x.1).unwrap_or(0);
        r.ratio_to_brp = r.update_ops as f64 / base.max(1) as f64;
    }
    let xs: Vec<f64> = brp.iter().map(|x| x.0 as f64).collect();
    let ys: Vec<f64> = brp.iter().map(|x| x.1 as f64).collect();
    Ok(BenchReport {
        rows,
        brp_fit: affine_fit(&xs, &ys),
    })
}
