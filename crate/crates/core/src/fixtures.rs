//! Small synthetic inputs in the election layout: covariate tables, a frame,
//! a survey, a prevalence file, and a user corpus with canned annotation
//! replies that decode back to the same survey.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::frame::us::STATE_NAMES;
use crate::frame::{
    write_frame, write_survey, Cell, FrameError, Respondent, Schema, StratificationFrame, SurveyDataset,
};

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureFiles {
    pub state_covariates: PathBuf,
    pub day_covariates: PathBuf,
    pub state_day_covariates: PathBuf,
    pub frame: PathBuf,
    pub survey: PathBuf,
    pub prevalence: PathBuf,
    pub users: PathBuf,
    /// user_id, kind, reply; loadable as a fixture transport.
    pub replies: PathBuf,
}

fn csv_out(path: &Path) -> Result<csv::Writer<std::fs::File>, FrameError> {
    csv::Writer::from_path(path).map_err(|e| FrameError::io(path, e))
}

fn rows<I, R>(path: &Path, header: &[&str], rows: I) -> Result<(), FrameError>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv_out(path)?;
    w.write_record(header).map_err(|e| FrameError::io(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| FrameError::io(path, e))?;
    }
    w.flush().map_err(|e| FrameError::io(path, e))
}

/// Choice probabilities (R, D, L, G, stay home) given a state's lean.
fn choice_probs(lean: f64) -> [f64; 5] {
    [0.8 * lean, 0.8 * (1.0 - lean), 0.04, 0.02, 0.14]
}

fn draw(p: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, q) in p.iter().enumerate() {
        acc += q;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}

// inverse of the reply decoding for the 2016 and 2020 vote blocks
const VOTE2016: [&str; 4] = ["L2", "L3", "L4", "L1"];
const VOTE2020: [&str; 5] = ["V2", "V3", "V4", "V5", "V1"];

fn demo_reply(r: &Respondent) -> String {
    let l = &r.levels;
    format!(
        "Based on the posts: E{} A{} S{} M1 {} H{} R2 {} T1 {}",
        l[2] + 1,
        l[3] + 2,
        l[1] + 1,
        if l[4] == 1 { "Q3" } else { "Q2" },
        l[5] + 1,
        VOTE2016[l[6] as usize],
        VOTE2020[r.choice],
    )
}

/// Writes a fixture set for [`Schema::election_2020`] into `dir` with
/// `respondents` users. Output is a pure function of `seed`.
pub fn write_election_fixture(dir: &Path, respondents: usize, seed: u64) -> Result<FixtureFiles, FrameError> {
    let schema = Schema::election_2020();
    let days = schema.day.as_ref().map_or(1, |d| d.count);
    std::fs::create_dir_all(dir).map_err(|e| FrameError::io(dir, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let files = FixtureFiles {
        state_covariates: dir.join("state.csv"),
        day_covariates: dir.join("day.csv"),
        state_day_covariates: dir.join("state_day.csv"),
        frame: dir.join("cells.csv"),
        survey: dir.join("survey.csv"),
        prevalence: dir.join("prevalence.csv"),
        users: dir.join("users.csv"),
        replies: dir.join("replies.csv"),
    };

    let lean: Vec<f64> = (0..STATE_NAMES.len()).map(|_| rng.random_range(0.3..0.7)).collect();
    let mut header = vec!["state"];
    header.extend(schema.state_covariates.iter().map(String::as_str));
    rows(
        &files.state_covariates,
        &header,
        lean.iter().enumerate().map(|(s, &x)| {
            let mut r = vec![
                STATE_NAMES[s].to_string(),
                x.to_string(),
                (x + rng.random_range(-0.03..0.03)).to_string(),
                rng.random_range(0.5..0.9f64).to_string(),
                rng.random_range(0.1..0.4f64).to_string(),
                rng.random_range(0.2..0.45f64).to_string(),
            ];
            r.extend((0..4).map(|k| u8::from(s % 4 == k).to_string()));
            r
        }),
    )?;
    rows(
        &files.day_covariates,
        &["day", "economic_index", "incumbent_approval"],
        (0..days).map(|d| {
            vec![
                (d + 1).to_string(),
                (d as f64 / days as f64).sin().to_string(),
                (0.42 + rng.random_range(-0.01..0.01)).to_string(),
            ]
        }),
    )?;
    rows(
        &files.state_day_covariates,
        &["state", "day", "covid_deaths"],
        (0..STATE_NAMES.len()).flat_map(|s| (0..days).map(move |d| (s, d))).map(|(s, d)| {
            vec![STATE_NAMES[s].to_string(), (d + 1).to_string(), rng.random_range(0.0..5.0f64).to_string()]
        }),
    )?;

    // one cell per state, gender and age; the other attributes drawn per cell
    let card: Vec<u32> = schema.attributes.iter().map(|a| a.cardinality as u32).collect();
    let mut cells = Vec::new();
    for s in 0..card[0] {
        for g in 0..card[1] {
            for a in 0..card[3] {
                let levels = vec![
                    s,
                    g,
                    rng.random_range(0..card[2]),
                    a,
                    rng.random_range(0..card[4]),
                    rng.random_range(0..card[5]),
                    rng.random_range(0..card[6]),
                ];
                cells.push(Cell { levels, weight: rng.random_range(100.0..1000.0f64).round() });
            }
        }
    }
    let frame = StratificationFrame::new(&schema, cells)?;
    write_frame(&files.frame, &schema, &frame)?;

    let mut prev = [0.0; 5];
    for c in frame.cells() {
        for (p, q) in prev.iter_mut().zip(choice_probs(lean[c.levels[0] as usize])) {
            *p += q * c.weight / frame.total_weight();
        }
    }
    rows(
        &files.prevalence,
        &["choice", "value"],
        schema.choices.iter().zip(prev).map(|(c, v)| vec![c.clone(), v.to_string()]),
    )?;

    let people: Vec<Respondent> = (0..respondents)
        .map(|_| {
            let levels: Vec<u32> = card.iter().map(|&k| rng.random_range(0..k)).collect();
            let choice = draw(&choice_probs(lean[levels[0] as usize]), &mut rng);
            Respondent { choice, levels, day: Some(rng.random_range(0..days as u32)) }
        })
        .collect();
    let survey = SurveyDataset::new(people)?;
    write_survey(&files.survey, &schema, &survey)?;

    let id = |i: usize| format!("u{:04}", i + 1);
    rows(
        &files.users,
        &["id", "location", "bio", "tweets", "day"],
        survey.respondents.iter().enumerate().map(|(i, r)| {
            let tweets: Vec<String> = (0..12).map(|k| format!("post {k} from {}", id(i))).collect();
            vec![
                id(i),
                STATE_NAMES[r.levels[0] as usize].to_string(),
                format!("account {}", id(i)),
                serde_json::to_string(&tweets).expect("strings serialize"),
                (r.day.unwrap_or(0) + 1).to_string(),
            ]
        }),
    )?;
    rows(
        &files.replies,
        &["user_id", "kind", "reply"],
        survey.respondents.iter().enumerate().flat_map(|(i, r)| {
            [
                vec![
                    id(i),
                    "location".into(),
                    format!("This user most likely lives in {}.", STATE_NAMES[r.levels[0] as usize]),
                ],
                vec![id(i), "demographics".into(), demo_reply(r)],
            ]
        }),
    )?;
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotate::{annotate_batch, load_users, to_survey, AnnotateConfig, FixtureTransport};
    use crate::frame::{load_covariates, load_frame, load_survey};

    #[test]
    fn fixture_loads_and_replies_decode_to_the_survey() {
        let dir = tempfile::tempdir().unwrap();
        let f = write_election_fixture(dir.path(), 40, 3).unwrap();
        let schema = Schema::election_2020();
        load_covariates(&schema, Some(&f.state_covariates), Some(&f.day_covariates), Some(&f.state_day_covariates))
            .unwrap();
        assert_eq!(load_frame(&f.frame, &schema).unwrap().len(), 51 * 2 * 6);
        let survey = load_survey(&f.survey, &schema).unwrap();
        assert_eq!(survey.len(), 40);

        let users = load_users(&f.users).unwrap();
        let t = FixtureTransport::load(&f.replies).unwrap();
        let cfg = AnnotateConfig { concurrency: 2, ..AnnotateConfig::default() };
        let ann = annotate_batch(&users, &t, &cfg).unwrap();
        let back = to_survey(&ann, &schema).unwrap();
        assert!(back.dropped.is_empty());
        assert_eq!(back.respondents, survey.respondents);

        let again = tempfile::tempdir().unwrap();
        write_election_fixture(again.path(), 40, 3).unwrap();
        for name in ["cells.csv", "survey.csv", "replies.csv", "state.csv"] {
            assert_eq!(std::fs::read(dir.path().join(name)).unwrap(), std::fs::read(again.path().join(name)).unwrap());
        }
    }
}
