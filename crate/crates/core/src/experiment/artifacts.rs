use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::Serialize;

use crate::error::Result;
use crate::irl::IrlRunState;

/// Files written for one run under `<outdir>/<run-id>/`.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub dir: PathBuf,
}

impl RunArtifacts {
    pub fn create(outdir: &Path, run_id: &str) -> Result<Self> {
        let dir = outdir.join(run_id);
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write_json<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let path = self.path(name);
        let mut w = BufWriter::new(File::create(&path)?);
        serde_json::to_writer_pretty(&mut w, value)?;
        Ok(path)
    }

    pub fn write_metrics(&self, state: &IrlRunState) -> Result<PathBuf> {
        let path = self.path("metrics.csv");
        state.write_metrics_csv(BufWriter::new(File::create(&path)?))?;
        Ok(path)
    }

    pub fn write_matrix(&self, name: &str, m: &Array2<f64>) -> Result<PathBuf> {
        let path = self.path(name);
        write_matrix_csv(&path, m)?;
        Ok(path)
    }
}

/// Headerless CSV, one matrix row per line.
pub fn write_matrix_csv(path: &Path, m: &Array2<f64>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    for row in m.outer_iter() {
        w.write_record(row.iter().map(|x| x.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// The standard set: config echo, metrics, final reward, final policy, report.
pub fn write_run_artifacts<C: Serialize, R: Serialize>(
    outdir: &Path,
    run_id: &str,
    config: &C,
    state: &IrlRunState,
    policy: &Array2<f64>,
    report: &R,
) -> Result<RunArtifacts> {
    let art = RunArtifacts::create(outdir, run_id)?;
    art.write_json("config.json", config)?;
    art.write_metrics(state)?;
    art.write_json("reward.json", &state.theta_old)?;
    let rows: Vec<Vec<f64>> = policy.outer_iter().map(|r| r.to_vec()).collect();
    art.write_json("policy.json", &rows)?;
    art.write_json("report.json", report)?;
    Ok(art)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::irl::{train, IrlConfig};
    use crate::mdp::random_mdp;
    use crate::soft::{occupancy, uniform_policy};

    #[test]
    fn writes_every_file_with_the_metrics_header() {
        let mdp = random_mdp(3, 2, 0.9, 0, 1.0).unwrap();
        let rho_e = occupancy(&uniform_policy(3, 2), &mdp).unwrap();
        let mut c = IrlConfig::default();
        c.m = 3;
        let state = train(&c, &mdp, &rho_e, None, None).unwrap();
        let tmp = tempfile::tempdir().unwrap();
        let art = write_run_artifacts(tmp.path(), "run", &c, &state, &uniform_policy(3, 2), &serde_json::json!({})).unwrap();
        for f in ["config.json", "metrics.csv", "reward.json", "policy.json", "report.json"] {
            assert!(art.path(f).exists(), "{f}");
        }
        let csv = fs::read_to_string(art.path("metrics.csv")).unwrap();
        assert!(csv.starts_with("iteration,likelihood,surrogate,eps,mu,j_gap,wall_ms\n"));
        assert_eq!(csv.lines().count(), 4);
        let echoed = IrlConfig::from_json(&fs::read_to_string(art.path("config.json")).unwrap()).unwrap();
        assert_eq!(echoed, c);
    }
}
