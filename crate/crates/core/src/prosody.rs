//! Frame-synchronous F0 contours from glottal-closure F0 labels.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Largest gap between consecutive glottal-closure labels still treated as
/// one voiced region (about two periods at 60 Hz).
pub const DEFAULT_MAX_GAP_S: f64 = 0.033;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F0Label {
    pub time: f64,
    pub f0: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct F0Contour {
    pub f0_per_frame: Vec<f64>,
    pub voicing_per_frame: Vec<u8>,
}

impl F0Contour {
    pub fn len(&self) -> usize {
        self.f0_per_frame.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f0_per_frame.is_empty()
    }
}

fn check_labels(labels: &[F0Label]) -> Result<()> {
    for (i, l) in labels.iter().enumerate() {
        if !(l.time.is_finite() && l.time >= 0.0) {
            return Err(Error::invalid(format!("label {i}: bad time {}", l.time)));
        }
        if !(l.f0.is_finite() && l.f0 >= 0.0) {
            return Err(Error::invalid(format!("label {i}: bad f0 {}", l.f0)));
        }
    }
    if let Some(i) = labels.windows(2).position(|w| w[1].time <= w[0].time) {
        return Err(Error::invalid(format!(
            "labels not strictly increasing in time at index {}",
            i + 1
        )));
    }
    Ok(())
}

/// Index ranges `[start, end]` (inclusive) of voiced label runs.
fn voiced_runs(labels: &[F0Label], max_gap: f64) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut current: Option<(usize, usize)> = None;
    for (i, l) in labels.iter().enumerate() {
        if l.f0 <= 0.0 {
            runs.extend(current.take());
            continue;
        }
        current = match current {
            Some((s, e)) if l.time - labels[e].time <= max_gap => Some((s, i)),
            Some(run) => {
                runs.push(run);
                Some((i, i))
            }
            None => Some((i, i)),
        };
    }
    runs.extend(current);
    runs
}

/// Maximal runs of positive-F0 labels whose consecutive gaps are at most
/// `max_gap`, each spanning first to last label time. A zero-F0 label ends a run.
pub fn voiced_regions(labels: &[F0Label], max_gap: f64) -> Result<Vec<(f64, f64)>> {
    check_labels(labels)?;
    if !(max_gap > 0.0) {
        return Err(Error::invalid("max_gap must be positive"));
    }
    Ok(voiced_runs(labels, max_gap)
        .into_iter()
        .map(|(s, e)| (labels[s].time, labels[e].time))
        .collect())
}

/// Linear interpolation of label F0 at each frame time inside a voiced region;
/// 0 elsewhere.
pub fn interpolate_f0(labels: &[F0Label], frame_times: &[f64], max_gap: f64) -> Result<F0Contour> {
    check_labels(labels)?;
    if !(max_gap > 0.0) {
        return Err(Error::invalid("max_gap must be positive"));
    }
    if frame_times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("frame times must be increasing"));
    }
    let mut run_of = vec![None; labels.len()];
    for (r, (s, e)) in voiced_runs(labels, max_gap).into_iter().enumerate() {
        run_of[s..=e].fill(Some(r));
    }

    let f0_per_frame: Vec<f64> = frame_times
        .iter()
        .map(|&t| {
            // first label strictly after t
            let next = labels.partition_point(|l| l.time <= t);
            if next == 0 {
                return 0.0;
            }
            let prev = next - 1;
            let Some(run) = run_of[prev] else {
                return 0.0;
            };
            let left = labels[prev];
            if left.time == t {
                return left.f0;
            }
            match labels.get(next) {
                Some(right) if run_of[next] == Some(run) => {
                    let frac = (t - left.time) / (right.time - left.time);
                    left.f0 + frac * (right.f0 - left.f0)
                }
                _ => 0.0,
            }
        })
        .collect();
    let voicing_per_frame = f0_per_frame.iter().map(|&f| u8::from(f != 0.0)).collect();
    Ok(F0Contour {
        f0_per_frame,
        voicing_per_frame,
    })
}

/// 1 for any non-zero F0, 0 for exactly zero.
pub fn voicing_index(f0: f64) -> Result<u8> {
    if !(f0 >= 0.0) {
        return Err(Error::invalid(format!("negative or NaN f0 {f0}")));
    }
    Ok(u8::from(f0 != 0.0))
}

/// Parses `time_seconds f0_hz` lines; blank lines and `#` comments are skipped.
pub fn parse_labels(text: &str) -> Result<Vec<F0Label>> {
    let mut labels = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split_whitespace();
        let mut next = |what: &str| -> Result<f64> {
            fields
                .next()
                .ok_or_else(|| Error::invalid(format!("line {}: missing {what}", lineno + 1)))?
                .parse::<f64>()
                .map_err(|e| Error::invalid(format!("line {}: {what}: {e}", lineno + 1)))
        };
        let time = next("time")?;
        let f0 = next("f0")?;
        if fields.next().is_some() {
            return Err(Error::invalid(format!("line {}: trailing fields", lineno + 1)));
        }
        labels.push(F0Label { time, f0 });
    }
    check_labels(&labels)?;
    Ok(labels)
}

pub fn format_labels(labels: &[F0Label]) -> String {
    let mut out = String::from("# time_s f0_hz\n");
    for l in labels {
        out.push_str(&format!("{:.6} {:.3}\n", l.time, l.f0));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn lab(time: f64, f0: f64) -> F0Label {
        F0Label { time, f0 }
    }

    #[test]
    fn regions() {
        let labels = [lab(0.10, 100.0), lab(0.11, 101.0), lab(0.12, 102.0)];
        assert_eq!(voiced_regions(&labels, 0.033).unwrap(), vec![(0.10, 0.12)]);

        let labels = [lab(0.1, 100.0), lab(0.11, 100.0), lab(0.61, 90.0), lab(0.62, 90.0)];
        assert_eq!(voiced_regions(&labels, 0.033).unwrap().len(), 2);

        assert!(voiced_regions(&[], 0.033).unwrap().is_empty());

        let unsorted = [lab(0.2, 100.0), lab(0.1, 100.0)];
        assert!(voiced_regions(&unsorted, 0.033).is_err());
    }

    #[test]
    fn zero_label_ends_run() {
        let labels = [lab(0.10, 100.0), lab(0.11, 0.0), lab(0.12, 100.0), lab(0.13, 100.0)];
        assert_eq!(
            voiced_regions(&labels, 0.033).unwrap(),
            vec![(0.10, 0.10), (0.12, 0.13)]
        );
    }

    #[test]
    fn interpolation() {
        let labels = [lab(0.10, 100.0), lab(0.20, 120.0)];
        let c = interpolate_f0(&labels, &[0.05, 0.10, 0.15, 0.20, 0.25], 0.2).unwrap();
        assert_eq!(c.f0_per_frame[0], 0.0);
        assert_eq!(c.f0_per_frame[1], 100.0);
        assert_abs_diff_eq!(c.f0_per_frame[2], 110.0, epsilon = 1e-9);
        assert_eq!(c.f0_per_frame[3], 120.0);
        assert_eq!(c.f0_per_frame[4], 0.0);
        assert_eq!(c.voicing_per_frame, vec![0, 1, 1, 1, 0]);

        // same labels but gap too large: the midpoint is unvoiced
        let c = interpolate_f0(&labels, &[0.15], 0.033).unwrap();
        assert_eq!(c.f0_per_frame, vec![0.0]);
    }

    #[test]
    fn voicing() {
        assert_eq!(voicing_index(110.0).unwrap(), 1);
        assert_eq!(voicing_index(0.0).unwrap(), 0);
        assert_eq!(voicing_index(1e-9).unwrap(), 1);
        assert!(voicing_index(-1.0).is_err());
    }

    #[test]
    fn label_file_parsing() {
        let text = "# header\n0.100 110.5\n\n0.108   112\n";
        let labels = parse_labels(text).unwrap();
        assert_eq!(labels, vec![lab(0.1, 110.5), lab(0.108, 112.0)]);
        assert_eq!(parse_labels(&format_labels(&labels)).unwrap(), labels);
        assert!(parse_labels("0.1\n").is_err());
        assert!(parse_labels("0.2 100\n0.1 100\n").is_err());
        assert!(parse_labels("0.1 -5\n").is_err());
    }

    fn label_track() -> impl Strategy<Value = Vec<F0Label>> {
        prop::collection::vec((0.001f64..0.03, 0.0f64..300.0, prop::bool::weighted(0.1)), 1..60)
            .prop_map(|steps| {
                let mut t = 0.0;
                steps
                    .into_iter()
                    .map(|(dt, f0, unvoiced)| {
                        t += dt;
                        lab(t, if unvoiced { 0.0 } else { 50.0 + f0 })
                    })
                    .collect()
            })
    }

    proptest! {
        #[test]
        fn contour_invariants(labels in label_track(), step in 0.002f64..0.02) {
            let end = labels.last().unwrap().time + 0.05;
            let times: Vec<f64> = (0..).map(|i| i as f64 * step).take_while(|&t| t < end).collect();
            let c = interpolate_f0(&labels, &times, DEFAULT_MAX_GAP_S).unwrap();
            prop_assert_eq!(c.len(), times.len());
            for (i, &t) in times.iter().enumerate() {
                let f = c.f0_per_frame[i];
                prop_assert_eq!(c.voicing_per_frame[i] == 1, f > 0.0);
                if f > 0.0 {
                    let next = labels.partition_point(|l| l.time <= t);
                    let lo = labels[next - 1];
                    let hi = labels.get(next).copied().unwrap_or(lo);
                    let (a, b) = (lo.f0.min(hi.f0), lo.f0.max(hi.f0));
                    prop_assert!(f >= a - 1e-9 && f <= b + 1e-9);
                }
            }
            for l in &labels {
                let c = interpolate_f0(&labels, &[l.time], DEFAULT_MAX_GAP_S).unwrap();
                prop_assert_eq!(c.f0_per_frame[0], l.f0);
            }
        }

        #[test]
        fn piecewise_linear(f0a in 60.0f64..300.0, f0b in 60.0f64..300.0, u in 0.0f64..0.3) {
            let labels = [lab(0.1, f0a), lab(0.12, f0b)];
            let ts = [0.1 + 0.02 * u, 0.1 + 0.02 * (u + 0.3), 0.1 + 0.02 * (u + 0.6)];
            let c = interpolate_f0(&labels, &ts, DEFAULT_MAX_GAP_S).unwrap();
            let f = &c.f0_per_frame;
            prop_assert!((f[2] - 2.0 * f[1] + f[0]).abs() < 1e-9);
        }
    }
}
