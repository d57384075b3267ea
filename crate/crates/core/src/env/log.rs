//! Per-step episode logs.
//!
//! CSV columns, one row per environment step (`t` counts from 1):
//!
//! `t, prey_x, prey_y, prey_action`, then for each predator `i`:
//! `p{i}_x, p{i}_y, p{i}_action, p{i}_r_step, p{i}_r_wall, p{i}_r_lone, p{i}_r_team`,
//! and finally `capture` (`none`, `lone:<i>` or `team:<i>+<j>[+<k>]`).
//! Positions are recorded after the step's moves.

use std::io::{Read, Write};

use super::{Action, CaptureOutcome, Pos, RewardVector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: u32,
    pub prey: Pos,
    pub prey_action: Action,
    pub predators: Vec<Pos>,
    pub actions: Vec<Action>,
    pub rewards: Vec<RewardVector>,
    pub capture: CaptureOutcome,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpisodeLog {
    pub steps: Vec<StepRecord>,
}

impl EpisodeLog {
    pub fn push(&mut self, record: StepRecord) {
        self.steps.push(record);
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let n = self.steps.first().map_or(0, |s| s.predators.len());
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = ["t", "prey_x", "prey_y", "prey_action"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        for i in 0..n {
            for col in ["x", "y", "action", "r_step", "r_wall", "r_lone", "r_team"] {
                header.push(format!("p{i}_{col}"));
            }
        }
        header.push("capture".into());
        w.write_record(&header)?;
        for s in &self.steps {
            let mut row = vec![
                s.t.to_string(),
                s.prey.x.to_string(),
                s.prey.y.to_string(),
                s.prey_action.index().to_string(),
            ];
            for i in 0..n {
                let r = s.rewards[i].0;
                row.extend([
                    s.predators[i].x.to_string(),
                    s.predators[i].y.to_string(),
                    s.actions[i].index().to_string(),
                ]);
                row.extend(r.iter().map(|v| v.to_string()));
            }
            row.push(s.capture.to_string());
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("<episode log>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        let cols = headers.len();
        if cols < 5 || (cols - 5) % 7 != 0 || (cols - 5) / 7 == 0 {
            return Err(Error::usage(format!("episode log has {cols} columns")));
        }
        let n = (cols - 5) / 7;
        let mut log = EpisodeLog::default();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let bad = |what: &str| Error::usage(format!("episode log row {}: bad {what}", line + 1));
            let int = |i: usize| rec[i].parse::<i32>().map_err(|_| bad(&headers[i]));
            let float = |i: usize| rec[i].parse::<f64>().map_err(|_| bad(&headers[i]));
            let action = |i: usize| {
                rec[i]
                    .parse::<usize>()
                    .ok()
                    .and_then(Action::from_index)
                    .ok_or_else(|| bad(&headers[i]))
            };
            let mut predators = Vec::with_capacity(n);
            let mut actions = Vec::with_capacity(n);
            let mut rewards = Vec::with_capacity(n);
            for i in 0..n {
                let base = 4 + 7 * i;
                predators.push(Pos::new(int(base)?, int(base + 1)?));
                actions.push(action(base + 2)?);
                rewards.push(RewardVector([
                    float(base + 3)?,
                    float(base + 4)?,
                    float(base + 5)?,
                    float(base + 6)?,
                ]));
            }
            log.push(StepRecord {
                t: rec[0].parse().map_err(|_| bad("t"))?,
                prey: Pos::new(int(1)?, int(2)?),
                prey_action: action(3)?,
                predators,
                actions,
                rewards,
                capture: rec[cols - 1].parse()?,
            });
        }
        Ok(log)
    }
}
