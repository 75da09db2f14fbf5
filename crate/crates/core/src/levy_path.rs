//! Compound Poisson noise realizations.
//!
//! Each channel `r` carries `L^r(t) = sum_{k <= N^r(t)} R_k^r` where `N^r` is a
//! Poisson counting process with rate `rate` and the marks `R_k^r` are i.i.d.
//! `N(0, mark_sigma^2)`. A path stores every jump on `(0, horizon]` so any time
//! grid can be evaluated against the same realization.
//!
//! Increments use the half-open convention `(t0, t1]`: a jump that lands
//! exactly on a grid node belongs to the step that ends at that node.
//!
//! Randomness comes from `ChaCha8Rng` seeded with `seed` and switched to stream
//! `channel`, so channels are independent and adding channels never perturbs
//! the existing ones.

use std::io::{BufRead, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};

use crate::error::{Error, Result};
use crate::fmt17;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevyPathSpec {
    /// Jumps per unit time on each channel.
    pub rate: f64,
    /// Standard deviation of the normal mark distribution.
    pub mark_sigma: f64,
    /// Number of independent noise channels.
    pub noise_count: usize,
    pub seed: u64,
}

impl LevyPathSpec {
    pub fn new(rate: f64, mark_sigma: f64, noise_count: usize, seed: u64) -> Self {
        Self {
            rate,
            mark_sigma,
            noise_count,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.rate.is_finite() || self.rate < 0.0 {
            return Err(Error::InvalidSpec(format!(
                "rate must be finite and non-negative, got {}",
                self.rate
            )));
        }
        if !self.mark_sigma.is_finite() || self.mark_sigma < 0.0 {
            return Err(Error::InvalidSpec(format!(
                "mark sigma must be finite and non-negative, got {}",
                self.mark_sigma
            )));
        }
        if self.noise_count == 0 {
            return Err(Error::InvalidSpec("noise_count must be at least 1".into()));
        }
        Ok(())
    }
}

/// One jump of one channel. Channels are numbered from 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpEvent {
    pub time: f64,
    pub channel: usize,
    pub mark: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevyPath {
    spec: LevyPathSpec,
    horizon: f64,
    events: Vec<JumpEvent>,
}

/// Samples one realization on `(0, horizon]`.
///
/// Per channel, waiting times are drawn from `Exp(rate)` and each arrival is
/// immediately followed by its mark draw. The result is a pure function of
/// `(spec, horizon)`.
pub fn sample_path(spec: LevyPathSpec, horizon: f64) -> Result<LevyPath> {
    spec.validate()?;
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::Domain(format!(
            "horizon must be finite and positive, got {horizon}"
        )));
    }

    let mut events = Vec::new();
    if spec.rate > 0.0 {
        let waiting = Exp::new(spec.rate).map_err(|e| Error::InvalidSpec(e.to_string()))?;
        let marks =
            Normal::new(0.0, spec.mark_sigma).map_err(|e| Error::InvalidSpec(e.to_string()))?;
        for channel in 1..=spec.noise_count {
            let mut rng = channel_rng(spec.seed, channel);
            let mut t = 0.0;
            loop {
                t += waiting.sample(&mut rng);
                if t > horizon {
                    break;
                }
                let mark = marks.sample(&mut rng);
                // Exp can return exactly 0 only with negligible probability; keep
                // events strictly inside (0, horizon].
                if t > 0.0 {
                    events.push(JumpEvent { time: t, channel, mark });
                }
            }
        }
    }
    sort_events(&mut events);

    Ok(LevyPath {
        spec,
        horizon,
        events,
    })
}

fn channel_rng(seed: u64, channel: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(channel as u64);
    rng
}

// Stable, so equal (time, channel) keeps insertion order.
fn sort_events(events: &mut [JumpEvent]) {
    events.sort_by(|a, b| {
        a.time
            .total_cmp(&b.time)
            .then_with(|| a.channel.cmp(&b.channel))
    });
}

impl LevyPath {
    /// Builds a path from explicit events. Events are sorted into canonical order.
    pub fn from_events(spec: LevyPathSpec, horizon: f64, mut events: Vec<JumpEvent>) -> Result<Self> {
        spec.validate()?;
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Domain(format!(
                "horizon must be finite and positive, got {horizon}"
            )));
        }
        for ev in &events {
            if !(ev.time > 0.0 && ev.time <= horizon) {
                return Err(Error::Domain(format!(
                    "event time {} outside (0, {horizon}]",
                    ev.time
                )));
            }
            if ev.channel == 0 || ev.channel > spec.noise_count {
                return Err(Error::Domain(format!(
                    "event channel {} outside 1..={}",
                    ev.channel, spec.noise_count
                )));
            }
            if !ev.mark.is_finite() {
                return Err(Error::Domain(format!("non-finite mark at t = {}", ev.time)));
            }
        }
        sort_events(&mut events);
        Ok(Self {
            spec,
            horizon,
            events,
        })
    }

    pub fn spec(&self) -> &LevyPathSpec {
        &self.spec
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn events(&self) -> &[JumpEvent] {
        &self.events
    }

    pub fn noise_count(&self) -> usize {
        self.spec.noise_count
    }

    fn check_interval(&self, t0: f64, t1: f64) -> Result<()> {
        if !(0.0 <= t0 && t0 <= t1 && t1 <= self.horizon) {
            return Err(Error::Domain(format!(
                "interval ({t0}, {t1}] not within [0, {}]",
                self.horizon
            )));
        }
        Ok(())
    }

    fn check_channel(&self, channel: usize) -> Result<()> {
        if channel == 0 || channel > self.spec.noise_count {
            return Err(Error::Domain(format!(
                "channel {channel} outside 1..={}",
                self.spec.noise_count
            )));
        }
        Ok(())
    }

    /// Index range of events with time in `(t0, t1]`.
    fn span(&self, t0: f64, t1: f64) -> std::ops::Range<usize> {
        let lo = self.events.partition_point(|e| e.time <= t0);
        let hi = self.events.partition_point(|e| e.time <= t1);
        lo..hi.max(lo)
    }

    /// `L^channel(t1) - L^channel(t0)`: sum of marks with time in `(t0, t1]`.
    pub fn increment(&self, channel: usize, t0: f64, t1: f64) -> Result<f64> {
        self.check_channel(channel)?;
        self.check_interval(t0, t1)?;
        Ok(self.events[self.span(t0, t1)]
            .iter()
            .filter(|e| e.channel == channel)
            .map(|e| e.mark)
            .sum())
    }

    /// `L^channel(t)`, the cumulative mark sum on `(0, t]`.
    pub fn value_at(&self, channel: usize, t: f64) -> Result<f64> {
        self.increment(channel, 0.0, t)
    }

    /// All events of any channel with time in `(t0, t1]`, in canonical order.
    pub fn jumps_in(&self, t0: f64, t1: f64) -> Result<&[JumpEvent]> {
        self.check_interval(t0, t1)?;
        Ok(&self.events[self.span(t0, t1)])
    }

    /// Element `j` is the increment over `(grid[j], grid[j + 1]]`.
    ///
    /// Computed in one sweep over the events, so it stays linear in
    /// `grid.len() + events.len()`.
    pub fn grid_increments(&self, channel: usize, grid: &[f64]) -> Result<Vec<f64>> {
        self.check_channel(channel)?;
        validate_grid(grid, self.horizon)?;
        let mut out = vec![0.0; grid.len().saturating_sub(1)];
        if out.is_empty() {
            return Ok(out);
        }
        let mut j = 0;
        for ev in &self.events[self.span(grid[0], grid[grid.len() - 1])] {
            while ev.time > grid[j + 1] {
                j += 1;
            }
            if ev.channel == channel {
                out[j] += ev.mark;
            }
        }
        Ok(out)
    }

    /// Writes the `time,channel,mark` event table.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "time,channel,mark")?;
        for ev in &self.events {
            writeln!(w, "{},{},{}", fmt17(ev.time), ev.channel, fmt17(ev.mark))?;
        }
        Ok(())
    }

    /// Reads an event table written by [`LevyPath::write_csv`]. The spec and
    /// horizon are not part of the file and must be supplied.
    pub fn read_csv<R: BufRead>(r: R, spec: LevyPathSpec, horizon: f64) -> Result<Self> {
        let mut events = Vec::new();
        let mut last_time = f64::NEG_INFINITY;
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            if i == 0 {
                if line.trim() != "time,channel,mark" {
                    return Err(Error::Csv {
                        line: lineno,
                        reason: format!("unexpected header {line:?}"),
                    });
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(Error::Csv {
                    line: lineno,
                    reason: format!("expected 3 fields, found {}", fields.len()),
                });
            }
            let bad = |what: &str| Error::Csv {
                line: lineno,
                reason: format!("cannot parse {what}"),
            };
            let time: f64 = fields[0].parse().map_err(|_| bad("time"))?;
            let channel: usize = fields[1].parse().map_err(|_| bad("channel"))?;
            let mark: f64 = fields[2].parse().map_err(|_| bad("mark"))?;
            if time < last_time {
                return Err(Error::Csv {
                    line: lineno,
                    reason: "times not in ascending order".into(),
                });
            }
            last_time = time;
            events.push(JumpEvent { time, channel, mark });
        }
        Self::from_events(spec, horizon, events)
    }
}

/// Checks that `grid` is strictly increasing and inside `[0, horizon]`.
pub(crate) fn validate_grid(grid: &[f64], horizon: f64) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Domain("empty grid".into()));
    }
    if grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::Domain("grid contains non-finite time".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("grid is not strictly increasing".into()));
    }
    if grid[0] < 0.0 || grid[grid.len() - 1] > horizon {
        return Err(Error::Domain(format!(
            "grid [{}, {}] not within [0, {horizon}]",
            grid[0],
            grid[grid.len() - 1]
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_jump_path() -> LevyPath {
        LevyPath::from_events(
            LevyPathSpec::new(1.0, 1.0, 1, 0),
            1.0,
            vec![
                JumpEvent { time: 0.7, channel: 1, mark: -0.2 },
                JumpEvent { time: 0.3, channel: 1, mark: 0.5 },
            ],
        )
        .unwrap()
    }

    #[test]
    fn zero_rate_has_no_events() {
        let path = sample_path(LevyPathSpec::new(0.0, 0.7, 1, 42), 1.0).unwrap();
        assert!(path.events().is_empty());
        let grid = [0.0, 0.25, 0.5, 1.0];
        assert_eq!(path.grid_increments(1, &grid).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn sampling_is_deterministic() {
        let spec = LevyPathSpec::new(5.0, 0.2, 2, 7);
        let a = sample_path(spec, 50.0).unwrap();
        let b = sample_path(spec, 50.0).unwrap();
        assert_eq!(a, b);
        let bits = |p: &LevyPath| {
            p.events()
                .iter()
                .map(|e| (e.time.to_bits(), e.channel, e.mark.to_bits()))
                .collect::<Vec<_>>()
        };
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn channel_streams_do_not_depend_on_channel_count() {
        let one = sample_path(LevyPathSpec::new(3.0, 1.0, 1, 11), 20.0).unwrap();
        let three = sample_path(LevyPathSpec::new(3.0, 1.0, 3, 11), 20.0).unwrap();
        let first: Vec<_> = three.events().iter().filter(|e| e.channel == 1).copied().collect();
        assert_eq!(one.events(), first.as_slice());
        assert!(three.events().iter().any(|e| e.channel == 3));
    }

    #[test]
    fn events_sorted_and_in_range() {
        let path = sample_path(LevyPathSpec::new(5.0, 0.2, 3, 3), 10.0).unwrap();
        assert!(path.events().windows(2).all(|w| w[0].time <= w[1].time));
        assert!(path.events().iter().all(|e| e.time > 0.0 && e.time <= 10.0));
    }

    #[test]
    fn invalid_specs_rejected() {
        for spec in [
            LevyPathSpec::new(-1.0, 0.2, 1, 0),
            LevyPathSpec::new(f64::NAN, 0.2, 1, 0),
            LevyPathSpec::new(1.0, f64::INFINITY, 1, 0),
            LevyPathSpec::new(1.0, -0.1, 1, 0),
            LevyPathSpec::new(1.0, 0.1, 0, 0),
        ] {
            assert!(matches!(sample_path(spec, 1.0), Err(Error::InvalidSpec(_))));
        }
        let ok = LevyPathSpec::new(1.0, 0.1, 1, 0);
        assert!(matches!(sample_path(ok, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn increment_half_open_convention() {
        let path = two_jump_path();
        assert_eq!(path.increment(1, 0.0, 1.0).unwrap(), 0.5 - 0.2);
        assert_eq!(path.increment(1, 0.3, 0.7).unwrap(), -0.2);
        assert_eq!(path.increment(1, 0.0, 0.3).unwrap(), 0.5);
        assert_eq!(path.increment(1, 0.4, 0.6).unwrap(), 0.0);
        assert_eq!(path.increment(1, 0.5, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn increment_domain_errors() {
        let path = two_jump_path();
        assert!(matches!(path.increment(1, -0.1, 0.5), Err(Error::Domain(_))));
        assert!(matches!(path.increment(1, 0.6, 0.5), Err(Error::Domain(_))));
        assert!(matches!(path.increment(1, 0.0, 1.5), Err(Error::Domain(_))));
        assert!(matches!(path.increment(2, 0.0, 0.5), Err(Error::Domain(_))));
        assert!(matches!(path.jumps_in(0.5, 0.4), Err(Error::Domain(_))));
    }

    #[test]
    fn jumps_in_partition() {
        let path = sample_path(LevyPathSpec::new(5.0, 0.2, 2, 9), 4.0).unwrap();
        assert_eq!(path.jumps_in(0.0, 4.0).unwrap(), path.events());
        let cuts = [0.0, 0.5, 1.3, 2.0, 3.9, 4.0];
        let joined: Vec<JumpEvent> = cuts
            .windows(2)
            .flat_map(|w| path.jumps_in(w[0], w[1]).unwrap().to_vec())
            .collect();
        assert_eq!(joined, path.events());
        let two = two_jump_path();
        assert!(two.jumps_in(0.31, 0.69).unwrap().is_empty());
    }

    #[test]
    fn grid_increments_match_increment() {
        let path = two_jump_path();
        assert_eq!(path.grid_increments(1, &[0.0, 1.0]).unwrap(), vec![0.3]);
        let grid = [0.0, 0.3, 0.5, 0.7, 1.0];
        assert_eq!(
            path.grid_increments(1, &grid).unwrap(),
            vec![0.5, 0.0, -0.2, 0.0]
        );
    }

    #[test]
    fn grid_increments_reject_bad_grids() {
        let path = two_jump_path();
        assert!(path.grid_increments(1, &[0.0, 0.5, 0.4]).is_err());
        assert!(path.grid_increments(1, &[0.0, 0.5, 0.5]).is_err());
        assert!(path.grid_increments(1, &[0.0, 2.0]).is_err());
        assert!(path.grid_increments(1, &[]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let path = sample_path(LevyPathSpec::new(5.0, 0.2, 2, 5), 3.0).unwrap();
        let mut buf = Vec::new();
        path.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("time,channel,mark\n"));
        assert_eq!(text.lines().count(), path.events().len() + 1);
        let back = LevyPath::read_csv(&buf[..], *path.spec(), 3.0).unwrap();
        assert_eq!(back, path);
    }

    #[test]
    fn csv_rejects_unsorted_rows() {
        let text = "time,channel,mark\n0.5,1,0.1\n0.2,1,0.1\n";
        let err = LevyPath::read_csv(text.as_bytes(), LevyPathSpec::new(1.0, 1.0, 1, 0), 1.0);
        assert!(matches!(err, Err(Error::Csv { line: 3, .. })));
    }
    #[test]
    fn poisson_counts_and_normal_marks() {
        let (rate, sigma, horizon) = (5.0f64, 0.2f64, 200.0f64);
        let expected = rate * horizon;
        let band = 3.0 * expected.sqrt();
        let mut inside = 0;
        let mut marks = Vec::new();
        let mut gaps = Vec::new();
        for seed in 0..1000 {
            let path = sample_path(LevyPathSpec::new(rate, sigma, 1, seed), horizon).unwrap();
            let n = path.events().len() as f64;
            inside += usize::from((n - expected).abs() <= band);
            marks.extend(path.events().iter().map(|e| e.mark));
            gaps.extend(path.events().windows(2).map(|w| w[1].time - w[0].time));
        }
        assert!(inside >= 990, "{inside} of 1000 counts within 3 sd");
        let n = marks.len() as f64;
        let mean = marks.iter().sum::<f64>() / n;
        let var = marks.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 4.0 * sigma / n.sqrt(), "mark mean {mean}");
        assert!((var / (sigma * sigma) - 1.0).abs() < 0.02, "mark variance {var}");
        let gap_mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
        assert!((gap_mean * rate - 1.0).abs() < 0.01, "mean waiting time {gap_mean}");
    }
}
