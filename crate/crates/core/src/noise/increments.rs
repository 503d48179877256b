use std::io::Write;

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::Serialize;

use super::grid::TimeGrid;
use super::intensity::IntensityPath;
use super::levy::LevyGrid;
use crate::error::{invalid, Result};
use crate::rng::{substream, StreamKind};

/// Noise slot: mark 0 is the Gaussian part, the others are jump marks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Slot {
    Gaussian,
    Jump(usize),
}

impl Slot {
    pub fn index(self) -> usize {
        match self {
            Slot::Gaussian => 0,
            Slot::Jump(k) => k + 1,
        }
    }

    pub fn from_index(i: usize) -> Self {
        if i == 0 {
            Slot::Gaussian
        } else {
            Slot::Jump(i - 1)
        }
    }
}

/// One step of noise for one path.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepNoise {
    pub d_g: f64,
    pub counts: Vec<u32>,
    /// `N_k - lamH * nu_k * dt`.
    pub compensated: Vec<f64>,
}

impl StepNoise {
    pub fn new(n_marks: usize) -> Self {
        Self {
            d_g: 0.0,
            counts: vec![0; n_marks],
            compensated: vec![0.0; n_marks],
        }
    }

    /// Increment of `mu` in the given slot.
    pub fn slot(&self, slot: usize) -> f64 {
        if slot == 0 {
            self.d_g
        } else {
            self.compensated[slot - 1]
        }
    }
}

/// Step-by-step sampler owning the Gaussian and per-mark Poisson sub-streams
/// of one path seed.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    seed: u64,
    gaussian: ChaCha8Rng,
    poisson: Vec<ChaCha8Rng>,
}

impl NoiseStream {
    pub fn new(seed: u64, n_marks: usize) -> Self {
        Self {
            seed,
            gaussian: substream(seed, StreamKind::Gaussian, 0),
            poisson: (0..n_marks as u64)
                .map(|k| substream(seed, StreamKind::Poisson, k))
                .collect(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Draw the increments over `(t_i, t_{i+1}]` given left-point intensities.
    pub fn next_step(
        &mut self,
        lam_b: f64,
        lam_h: f64,
        dt: f64,
        levy: &LevyGrid,
        out: &mut StepNoise,
    ) {
        let xi: f64 = StandardNormal.sample(&mut self.gaussian);
        out.d_g = (lam_b * dt).sqrt() * xi;
        for (k, rng) in self.poisson.iter_mut().enumerate() {
            let mean = lam_h * levy.weights()[k] * dt;
            let count = if mean > 0.0 {
                Poisson::new(mean)
                    .expect("finite positive Poisson mean")
                    .sample(rng) as u32
            } else {
                0
            };
            out.counts[k] = count;
            out.compensated[k] = count as f64 - mean;
        }
    }
}

/// Increments of the mixture noise on one path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseIncrements {
    grid: TimeGrid,
    marks: Vec<f64>,
    seed: u64,
    d_g: Vec<f64>,
    counts: Vec<u32>,
    compensated: Vec<f64>,
}

impl NoiseIncrements {
    pub(crate) fn with_capacity(grid: TimeGrid, levy: &LevyGrid, seed: u64) -> Self {
        let n = grid.n_steps();
        let m = levy.len();
        Self {
            grid,
            marks: levy.marks().to_vec(),
            seed,
            d_g: Vec::with_capacity(n),
            counts: Vec::with_capacity(n * m),
            compensated: Vec::with_capacity(n * m),
        }
    }

    pub(crate) fn push(&mut self, step: &StepNoise) {
        self.d_g.push(step.d_g);
        self.counts.extend_from_slice(&step.counts);
        self.compensated.extend_from_slice(&step.compensated);
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_marks(&self) -> usize {
        self.marks.len()
    }

    pub fn d_g(&self, i: usize) -> f64 {
        self.d_g[i]
    }

    pub fn count(&self, i: usize, k: usize) -> u32 {
        self.counts[i * self.marks.len() + k]
    }

    /// `N_{i,k} - lamH_i nu_k dt`, the increment of the centred Poisson measure.
    pub fn compensated(&self, i: usize, k: usize) -> f64 {
        self.compensated[i * self.marks.len() + k]
    }

    /// Jump-size weighted increment `z_k (N_{i,k} - lamH_i nu_k dt)`.
    pub fn d_j(&self, i: usize, k: usize) -> f64 {
        self.marks[k] * self.compensated(i, k)
    }

    /// Increment of `mu` over step `i` in slot `s` (0 = Gaussian).
    pub fn slot(&self, i: usize, s: usize) -> f64 {
        if s == 0 {
            self.d_g[i]
        } else {
            self.compensated(i, s - 1)
        }
    }

    /// `mu(window)`.
    pub fn measure(&self, window: &Window) -> Result<f64> {
        window.validate(&self.grid, self.marks.len())?;
        let mut total = 0.0;
        for i in self.grid.steps_within(window.start, window.end) {
            if window.marks.gaussian {
                total += self.d_g[i];
            }
            for &k in &window.marks.jumps {
                total += self.compensated(i, k);
            }
        }
        Ok(total)
    }

    /// CSV with columns `step,t,dG,dJ_1..dJ_M`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["step".to_string(), "t".to_string(), "dG".to_string()];
        header.extend((1..=self.marks.len()).map(|k| format!("dJ_{k}")));
        wtr.write_record(&header)?;
        for i in 0..self.grid.n_steps() {
            let mut row = vec![
                i.to_string(),
                self.grid.knot(i).to_string(),
                self.d_g[i].to_string(),
            ];
            row.extend((0..self.marks.len()).map(|k| self.d_j(i, k).to_string()));
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Draw the noise increments of one path, conditionally on `ip`.
pub fn sample_noise(ip: &IntensityPath, levy: &LevyGrid, seed: u64) -> NoiseIncrements {
    let grid = ip.grid();
    let dt = grid.dt();
    let mut stream = NoiseStream::new(seed, levy.len());
    let mut step = StepNoise::new(levy.len());
    let mut out = NoiseIncrements::with_capacity(grid.clone(), levy, seed);
    for i in 0..grid.n_steps() {
        let (lb, lh) = ip.at(i);
        stream.next_step(lb, lh, dt, levy, &mut step);
        out.push(&step);
    }
    out
}

/// Subset of `{0} U {z_1..z_M}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkSet {
    pub gaussian: bool,
    pub jumps: Vec<usize>,
}

impl MarkSet {
    pub fn all(levy: &LevyGrid) -> Self {
        Self {
            gaussian: true,
            jumps: (0..levy.len()).collect(),
        }
    }

    pub fn gaussian() -> Self {
        Self {
            gaussian: true,
            jumps: Vec::new(),
        }
    }

    /// All jump marks, without the Gaussian slot.
    pub fn jumps(levy: &LevyGrid) -> Self {
        Self {
            gaussian: false,
            jumps: (0..levy.len()).collect(),
        }
    }

    pub fn none() -> Self {
        Self {
            gaussian: false,
            jumps: Vec::new(),
        }
    }
}

/// `(start, end] x marks`.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub start: f64,
    pub end: f64,
    pub marks: MarkSet,
}

impl Window {
    pub fn new(start: f64, end: f64, marks: MarkSet) -> Self {
        Self { start, end, marks }
    }

    fn validate(&self, grid: &TimeGrid, n_marks: usize) -> Result<()> {
        if !(self.start >= 0.0
            && self.start < self.end
            && self.end <= grid.horizon() * (1.0 + 1e-12))
        {
            return Err(invalid(format!(
                "malformed window ({}, {}]",
                self.start, self.end
            )));
        }
        if let Some(k) = self.marks.jumps.iter().find(|&&k| k >= n_marks) {
            return Err(invalid(format!("mark index {k} out of range")));
        }
        Ok(())
    }
}

/// `Lambda(window)`: conditional variance of `mu(window)` given the intensity.
pub fn lambda_measure(window: &Window, ip: &IntensityPath, levy: &LevyGrid) -> Result<f64> {
    let grid = ip.grid();
    window.validate(grid, levy.len())?;
    let dt = grid.dt();
    let nu: f64 = window.marks.jumps.iter().map(|&k| levy.weights()[k]).sum();
    let g = if window.marks.gaussian { 1.0 } else { 0.0 };
    Ok(grid
        .steps_within(window.start, window.end)
        .map(|i| (g * ip.lam_b()[i] + ip.lam_h()[i] * nu) * dt)
        .sum())
}

/// Non-anticipating integral `sum_i phi_i(0) dG_i + sum_{i,k} phi_i(z_k) dN~_{i,k}`.
///
/// `phi(i, slot, noise)` must only read increments of steps `< i`.
pub fn integrate<F>(phi: F, noise: &NoiseIncrements) -> f64
where
    F: Fn(usize, Slot, &NoiseIncrements) -> f64,
{
    let m = noise.n_marks();
    let mut total = 0.0;
    for i in 0..noise.grid().n_steps() {
        total += phi(i, Slot::Gaussian, noise) * noise.d_g(i);
        for k in 0..m {
            total += phi(i, Slot::Jump(k), noise) * noise.compensated(i, k);
        }
    }
    total
}

/// `sum_i ||phi_i||^2_{lambda_i} dt`, the pathwise compensator of `I(phi)^2`.
pub fn integrand_energy<F>(
    phi: F,
    noise: &NoiseIncrements,
    ip: &IntensityPath,
    levy: &LevyGrid,
) -> f64
where
    F: Fn(usize, Slot, &NoiseIncrements) -> f64,
{
    let dt = ip.grid().dt();
    (0..ip.grid().n_steps())
        .map(|i| {
            let (lb, lh) = ip.at(i);
            let mut s = phi(i, Slot::Gaussian, noise).powi(2) * lb;
            for (k, w) in levy.weights().iter().enumerate() {
                s += phi(i, Slot::Jump(k), noise).powi(2) * lh * w;
            }
            s * dt
        })
        .sum()
}

/// A function on `{0} U {z_1..z_M}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarkFunction {
    pub v0: f64,
    pub v: Vec<f64>,
}

impl MarkFunction {
    pub fn new(v0: f64, v: Vec<f64>) -> Self {
        Self { v0, v }
    }

    pub fn zeros(n_marks: usize) -> Self {
        Self {
            v0: 0.0,
            v: vec![0.0; n_marks],
        }
    }

    pub fn constant(value: f64, n_marks: usize) -> Self {
        Self {
            v0: value,
            v: vec![value; n_marks],
        }
    }

    /// From slot layout `[v0, v_1, ..., v_M]`.
    pub fn from_slots(slots: &[f64]) -> Self {
        Self {
            v0: slots[0],
            v: slots[1..].to_vec(),
        }
    }

    pub fn to_slots(&self) -> Vec<f64> {
        std::iter::once(self.v0)
            .chain(self.v.iter().copied())
            .collect()
    }

    pub fn slot(&self, s: usize) -> f64 {
        if s == 0 {
            self.v0
        } else {
            self.v[s - 1]
        }
    }

    pub fn is_finite(&self) -> bool {
        self.v0.is_finite() && self.v.iter().all(|x| x.is_finite())
    }
}

/// `||alpha||_{lambda}` with `lambda = (lamB, lamH)`.
pub fn lambda_seminorm(alpha: &MarkFunction, lam_b: f64, lam_h: f64, levy: &LevyGrid) -> f64 {
    debug_assert_eq!(alpha.v.len(), levy.len());
    seminorm_sq_slots(&alpha.to_slots(), lam_b, lam_h, levy).sqrt()
}

/// Squared seminorm on the slot layout `[v0, v_1..v_M]`.
pub fn seminorm_sq_slots(slots: &[f64], lam_b: f64, lam_h: f64, levy: &LevyGrid) -> f64 {
    let mut s = slots[0] * slots[0] * lam_b;
    for (v, w) in slots[1..].iter().zip(levy.weights()) {
        s += v * v * lam_h * w;
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{build_grid, sample_intensity, IntensityModel};

    fn path(lb: f64, lh: f64, t: f64, n: usize) -> IntensityPath {
        sample_intensity(
            &IntensityModel::constant(lb, lh),
            &build_grid(t, n).unwrap(),
            0,
        )
        .unwrap()
    }

    fn one_mark(weight: f64) -> LevyGrid {
        LevyGrid::new(vec![1.0], vec![weight], 0.0).unwrap()
    }

    #[test]
    fn null_intensity_gives_zero_increments() {
        let ip = path(0.0, 0.0, 1.0, 20);
        let levy = one_mark(1.0);
        let n = sample_noise(&ip, &levy, 11);
        for i in 0..20 {
            assert_eq!(n.d_g(i), 0.0);
            assert_eq!(n.d_j(i, 0), 0.0);
            assert_eq!(n.count(i, 0), 0);
        }
    }

    #[test]
    fn identical_seeds_identical_increments() {
        let ip = path(1.0, 2.0, 1.0, 50);
        let levy = LevyGrid::new(vec![-0.5, 1.0], vec![1.0, 0.5], 0.0).unwrap();
        assert_eq!(sample_noise(&ip, &levy, 5), sample_noise(&ip, &levy, 5));
        assert_ne!(sample_noise(&ip, &levy, 5), sample_noise(&ip, &levy, 6));
    }

    #[test]
    fn jump_increment_is_scaled_compensated_count() {
        let ip = path(0.0, 3.0, 1.0, 10);
        let levy = LevyGrid::new(vec![2.0], vec![1.5], 0.0).unwrap();
        let n = sample_noise(&ip, &levy, 1);
        for i in 0..10 {
            let expected = 2.0 * (n.count(i, 0) as f64 - 3.0 * 1.5 * 0.1);
            assert!((n.d_j(i, 0) - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn time_changed_bm_variance() {
        let ip = path(1.0, 0.0, 1.0, 10);
        let levy = LevyGrid::gaussian_only();
        let n = 10_000;
        let sums: Vec<f64> = (0..n)
            .map(|s| {
                let inc = sample_noise(&ip, &levy, s);
                (0..10).map(|i| inc.d_g(i)).sum()
            })
            .collect();
        let mean = sums.iter().sum::<f64>() / n as f64;
        let var = sums.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        assert!((var - 1.0).abs() < 0.05, "variance {var}");
    }

    #[test]
    fn poisson_mean_count() {
        let ip = path(0.0, 1.0, 1.0, 10);
        let levy = one_mark(2.0);
        let n = 10_000;
        let total: f64 = (0..n)
            .map(|s| {
                let inc = sample_noise(&ip, &levy, s);
                (0..10).map(|i| inc.count(i, 0) as f64).sum::<f64>()
            })
            .sum();
        let mean = total / n as f64;
        assert!((mean - 2.0).abs() < 0.1, "mean count {mean}");
    }

    #[test]
    fn lambda_measure_examples() {
        let ip = path(1.0, 0.0, 1.0, 10);
        let levy = one_mark(3.0);
        let w = Window::new(0.0, 1.0, MarkSet::gaussian());
        assert!((lambda_measure(&w, &ip, &levy).unwrap() - 1.0).abs() < 1e-12);

        let ip = path(0.0, 2.0, 1.0, 10);
        let w = Window::new(0.0, 0.5, MarkSet::jumps(&levy));
        assert!((lambda_measure(&w, &ip, &levy).unwrap() - 3.0).abs() < 1e-12);

        let w = Window::new(0.0, 1.0, MarkSet::none());
        assert_eq!(lambda_measure(&w, &ip, &levy).unwrap(), 0.0);

        assert!(lambda_measure(&Window::new(0.5, 0.5, MarkSet::gaussian()), &ip, &levy).is_err());
        assert!(lambda_measure(&Window::new(-0.1, 0.5, MarkSet::gaussian()), &ip, &levy).is_err());
    }

    #[test]
    fn zero_integrand_integrates_to_zero() {
        let ip = path(1.0, 1.0, 1.0, 10);
        let levy = one_mark(1.0);
        let n = sample_noise(&ip, &levy, 3);
        assert_eq!(integrate(|_, _, _| 0.0, &n), 0.0);
    }

    #[test]
    fn seminorm_examples() {
        let levy0 = LevyGrid::gaussian_only();
        assert_eq!(
            lambda_seminorm(&MarkFunction::zeros(0), 1.0, 1.0, &levy0),
            0.0
        );
        assert_eq!(
            lambda_seminorm(&MarkFunction::new(1.0, vec![]), 4.0, 0.0, &levy0),
            2.0
        );
        let levy1 = one_mark(1.0);
        assert_eq!(
            lambda_seminorm(&MarkFunction::new(0.0, vec![2.0]), 0.0, 1.0, &levy1),
            2.0
        );
    }

    #[test]
    fn csv_has_expected_columns() {
        let ip = path(1.0, 1.0, 1.0, 2);
        let levy = LevyGrid::new(vec![-1.0, 1.0], vec![1.0, 1.0], 0.0).unwrap();
        let n = sample_noise(&ip, &levy, 3);
        let mut buf = Vec::new();
        n.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "step,t,dG,dJ_1,dJ_2");
        assert_eq!(lines.count(), 2);
    }
}
