//! Learning-curve normalization and run ordering.

use std::cmp::Ordering;
use std::io::Write;
use std::path::Path;

use super::EvalReport;
use crate::error::{Error, Result};
use crate::ppo::TrainStats;

/// First line of `curves.csv`, documenting the normalization.
pub const CURVES_NOTE: &str = "# normalized_reward = mean_reward / max(|mean_reward|) over the rows of the same run_id";

#[derive(Debug, Clone, PartialEq)]
pub struct RunCurve {
    pub run_id: String,
    pub stats: Vec<TrainStats>,
    /// Evaluation of the final policy, if any; preferred for ordering.
    pub eval: Option<EvalReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub step: u64,
    pub mean_reward: f64,
    pub normalized_reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedCurve {
    pub run_id: String,
    pub points: Vec<CurvePoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub curves: Vec<NormalizedCurve>,
    /// Runs by final score, best first.
    pub ranking: Vec<(String, f64)>,
    /// `(a, b, ordering of a's final score against b's)` for every pair.
    pub pairwise: Vec<(String, String, Ordering)>,
}

/// Final score: eval score when present, else the last finite mean reward.
pub fn final_score(run: &RunCurve) -> f64 {
    if let Some(e) = &run.eval {
        return e.score as f64;
    }
    run.stats
        .iter()
        .rev()
        .map(|s| s.mean_reward)
        .find(|v| v.is_finite())
        .unwrap_or(f64::NAN)
}

pub fn normalize_curve(run_id: &str, stats: &[TrainStats]) -> NormalizedCurve {
    let scale = stats
        .iter()
        .map(|s| s.mean_reward)
        .filter(|v| v.is_finite())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let points = stats
        .iter()
        .filter(|s| s.mean_reward.is_finite())
        .map(|s| CurvePoint {
            step: s.step,
            mean_reward: s.mean_reward,
            normalized_reward: if scale > 0.0 { s.mean_reward / scale } else { 0.0 },
        })
        .collect();
    NormalizedCurve { run_id: run_id.to_string(), points }
}

pub fn compare_runs(runs: &[RunCurve]) -> Result<Comparison> {
    if runs.len() < 2 {
        return Err(Error::EmptyInput);
    }
    let curves = runs.iter().map(|r| normalize_curve(&r.run_id, &r.stats)).collect();
    let scores: Vec<(String, f64)> = runs.iter().map(|r| (r.run_id.clone(), final_score(r))).collect();
    let mut ranking = scores.clone();
    ranking.sort_by(|a, b| b.1.total_cmp(&a.1));
    let mut pairwise = Vec::new();
    for i in 0..scores.len() {
        for j in i + 1..scores.len() {
            pairwise.push((scores[i].0.clone(), scores[j].0.clone(), scores[i].1.total_cmp(&scores[j].1)));
        }
    }
    Ok(Comparison { curves, ranking, pairwise })
}

impl Comparison {
    pub fn write_curves_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{CURVES_NOTE}")?;
        writeln!(w, "step,run_id,mean_reward,normalized_reward")?;
        for c in &self.curves {
            for p in &c.points {
                writeln!(w, "{},{},{},{}", p.step, c.run_id, p.mean_reward, p.normalized_reward)?;
            }
        }
        Ok(())
    }

    /// Human-readable ordering table.
    pub fn ordering_table(&self) -> String {
        let mut s = String::from("rank,run_id,final_score\n");
        for (i, (id, v)) in self.ranking.iter().enumerate() {
            s.push_str(&format!("{},{id},{v}\n", i + 1));
        }
        for (a, b, o) in &self.pairwise {
            let sym = match o {
                Ordering::Greater => ">",
                Ordering::Less => "<",
                Ordering::Equal => "=",
            };
            s.push_str(&format!("{a} {sym} {b}\n"));
        }
        s
    }
}

pub fn read_train_log(path: &Path) -> Result<Vec<TrainStats>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::ConfigParse(format!("{}: {other:?}", path.display())),
    })?;
    r.deserialize()
        .collect::<std::result::Result<Vec<TrainStats>, _>>()
        .map_err(|e| Error::ConfigParse(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(rewards: &[f64]) -> Vec<TrainStats> {
        rewards
            .iter()
            .enumerate()
            .map(|(i, &r)| TrainStats {
                step: (i as u64 + 1) * 100,
                mean_reward: r,
                mean_ep_len: 10.0,
                policy_loss: 0.0,
                value_loss: 0.0,
                entropy: 0.0,
                clip_frac: 0.0,
                lr: 0.0,
            })
            .collect()
    }

    fn run(id: &str, r: &[f64]) -> RunCurve {
        RunCurve { run_id: id.into(), stats: stats(r), eval: None }
    }

    #[test]
    fn needs_two_runs() {
        assert!(matches!(compare_runs(&[run("a", &[1.0])]), Err(Error::EmptyInput)));
    }

    #[test]
    fn identical_logs_identical_curves() {
        let c = compare_runs(&[run("a", &[0.1, -2.0, 4.0]), run("b", &[0.1, -2.0, 4.0])]).unwrap();
        assert_eq!(c.curves[0].points, c.curves[1].points);
    }

    #[test]
    fn normalized_peak_is_one() {
        let c = normalize_curve("x", &stats(&[-3.0, 1.0, f64::NAN, 2.0]));
        let m = c.points.iter().map(|p| p.normalized_reward.abs()).fold(0.0, f64::max);
        assert_eq!(m, 1.0);
        assert_eq!(c.points.len(), 3);
    }

    #[test]
    fn ordering_prefers_eval_scores() {
        let mut a = run("per_action", &[0.5]);
        a.eval = Some(EvalReport { score: 900, ..Default::default() });
        let mut b = run("sparse", &[2.0]);
        b.eval = Some(EvalReport { score: 3, ..Default::default() });
        let c = compare_runs(&[a, b]).unwrap();
        assert_eq!(c.ranking[0].0, "per_action");
        assert_eq!(c.pairwise[0].2, Ordering::Greater);
        assert!(c.ordering_table().contains("per_action > sparse"));
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("train_log.csv");
        let mut w = csv::Writer::from_path(&p).unwrap();
        for s in stats(&[1.0, 2.5]) {
            w.serialize(s).unwrap();
        }
        w.flush().unwrap();
        drop(w);
        assert_eq!(read_train_log(&p).unwrap(), stats(&[1.0, 2.5]));
        let c = compare_runs(&[run("a", &[1.0]), run("b", &[2.0])]).unwrap();
        let mut out = Vec::new();
        c.write_curves_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("# normalized_reward"));
        assert_eq!(text.lines().nth(1).unwrap(), "step,run_id,mean_reward,normalized_reward");
    }
}
