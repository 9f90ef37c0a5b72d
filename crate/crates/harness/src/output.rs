use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use fhq_core::learner::TrainingTrace;
use fhq_core::policy::{greedy_policy, q_to_value};
use fhq_core::{FiniteHorizonMdp, QTable};
use serde::Serialize;

/// All artifacts of one run go under `root`; names are fixed, so nothing is
/// written elsewhere.
pub(crate) struct OutputDir {
    root: PathBuf,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(Self {
            root: root.to_path_buf(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn writer(&self, name: &str) -> Result<BufWriter<File>> {
        let path = self.path(name);
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        Ok(BufWriter::new(file))
    }

    pub fn json<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> Result<()> {
        let mut w = self.writer(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    pub fn text(&self, name: &str, text: &str) -> Result<()> {
        let mut w = self.writer(name)?;
        w.write_all(text.as_bytes())?;
        w.flush()?;
        Ok(())
    }

    pub fn csv<R: Serialize>(&self, name: &str, rows: impl IntoIterator<Item = R>) -> Result<()> {
        let mut w = csv::Writer::from_writer(self.writer(name)?);
        for row in rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn trace(&self, name: &str, trace: &TrainingTrace) -> Result<()> {
        let mut w = self.writer(name)?;
        trace.write_csv(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

#[derive(Serialize)]
struct QRow {
    stage: usize,
    state: usize,
    action: usize,
    q: f64,
}

#[derive(Serialize)]
struct QPairRow {
    stage: usize,
    state: usize,
    action: usize,
    q_learned: f64,
    q_dp: f64,
}

#[derive(Serialize)]
struct ValueRow {
    stage: usize,
    state: usize,
    #[serde(rename = "J")]
    value: f64,
}

#[derive(Serialize)]
struct PolicyRow {
    stage: usize,
    state: usize,
    action: usize,
}

#[derive(Serialize)]
struct ValueSnapshotRow {
    state: usize,
    #[serde(rename = "J_learned")]
    learned: f64,
    #[serde(rename = "J_dp")]
    dp: f64,
}

#[derive(Serialize)]
struct PolicySnapshotRow {
    state: usize,
    action_learned: usize,
    action_dp: usize,
}

/// Feasible `(n, i, a)` for `n = 0..=N`, in table order.
fn entries(mdp: &FiniteHorizonMdp) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
    (0..=mdp.horizon()).flat_map(move |n| {
        (0..mdp.num_states())
            .flat_map(move |i| mdp.feasible_actions(i).iter().map(move |&a| (n, i, a)))
    })
}

/// `stage,state,action,q`
pub(crate) fn write_q(out: &OutputDir, name: &str, mdp: &FiniteHorizonMdp, q: &QTable) -> Result<()> {
    out.csv(
        name,
        entries(mdp).map(|(n, i, a)| QRow {
            stage: n,
            state: i,
            action: a,
            q: q.get(n, i, a),
        }),
    )
}

/// `stage,state,action,q_learned,q_dp`
pub(crate) fn write_q_pair(
    out: &OutputDir,
    name: &str,
    mdp: &FiniteHorizonMdp,
    learned: &QTable,
    dp: &QTable,
) -> Result<()> {
    out.csv(
        name,
        entries(mdp).map(|(n, i, a)| QPairRow {
            stage: n,
            state: i,
            action: a,
            q_learned: learned.get(n, i, a),
            q_dp: dp.get(n, i, a),
        }),
    )
}

/// `stage,state,J` for `n = 0..=N` and `stage,state,action` for `n < N`.
pub(crate) fn write_value_and_policy(
    out: &OutputDir,
    prefix: &str,
    mdp: &FiniteHorizonMdp,
    q: &QTable,
) -> Result<()> {
    let (h, s) = (mdp.horizon(), mdp.num_states());
    let values = q_to_value(mdp, q)?;
    let policy = greedy_policy(mdp, q)?;
    out.csv(
        &format!("value_{prefix}.csv"),
        (0..=h).flat_map(|n| (0..s).map(move |i| (n, i))).map(|(n, i)| ValueRow {
            stage: n,
            state: i,
            value: values.get(n, i),
        }),
    )?;
    out.csv(
        &format!("policy_{prefix}.csv"),
        (0..h).flat_map(|n| (0..s).map(move |i| (n, i))).map(|(n, i)| PolicyRow {
            stage: n,
            state: i,
            action: policy.action(n, i),
        }),
    )
}

/// `value_stage_{n}.csv` (`state,J_learned,J_dp`) and `policy_stage_{n}.csv`
/// (`state,action_learned,action_dp`).
pub(crate) fn write_snapshots(
    out: &OutputDir,
    mdp: &FiniteHorizonMdp,
    learned: &QTable,
    dp: &QTable,
    stages: &[usize],
) -> Result<()> {
    let (v_learned, v_dp) = (q_to_value(mdp, learned)?, q_to_value(mdp, dp)?);
    let (p_learned, p_dp) = (greedy_policy(mdp, learned)?, greedy_policy(mdp, dp)?);
    for &n in stages {
        out.csv(
            &format!("value_stage_{n}.csv"),
            (0..mdp.num_states()).map(|i| ValueSnapshotRow {
                state: i,
                learned: v_learned.get(n, i),
                dp: v_dp.get(n, i),
            }),
        )?;
        out.csv(
            &format!("policy_stage_{n}.csv"),
            (0..mdp.num_states()).map(|i| PolicySnapshotRow {
                state: i,
                action_learned: p_learned.action(n, i),
                action_dp: p_dp.action(n, i),
            }),
        )?;
    }
    Ok(())
}
