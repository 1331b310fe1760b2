//! Scripted end-to-end study against the in-process mock model.
//!
//! Readers, the senior reviewer and the evaluation raters are scripted
//! agents. Each arm's reading times and rater scores are drawn from the
//! profile; everything else (allocation, timing, drafts, release, blinding,
//! export) runs through the real study service.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use clap::Args;
use cxrkit_core::evaluation::{
    Instrument, ItemId, Position, Provenance, RaterId, Response, SourceGuess,
};
use cxrkit_core::{Arm, CaseId, Labeler, ReportId};
use cxrkit_study::export::export_study;
use cxrkit_study::mock::{template_response, FaultPlan, InProcessModel, MOCK_MODEL_VERSION};
use cxrkit_study::{
    generate_allocation, unblind, CaseIntake, ManualClock, ModelRequest, ReaderId, Study,
    StudyConfig, StudyExport, StudyId, StudyService,
};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::input::{read_json, resolve_input};
use crate::stats::{outcomes, OutcomeTable};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmProfile {
    pub reading_time_mean_s: f64,
    pub reading_time_sd_s: f64,
    /// Per-case mean Likert quality over raters.
    pub quality_mean: f64,
    pub quality_sd: f64,
    /// Per-case mean agreement with the released report.
    pub agreement_mean: f64,
    pub agreement_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Profile {
    pub cases: usize,
    pub readers: usize,
    pub block_size: usize,
    pub reviewers: usize,
    pub raters: usize,
    pub preference_threshold: usize,
    pub standard_care: ArmProfile,
    pub ai_assisted: ArmProfile,
    /// Correlation of a case's latent quality between the two arms.
    pub quality_correlation: f64,
    pub agreement_correlation: f64,
    /// Rescale each arm's draws so the sample mean and SD equal the profile.
    pub exact_moments: bool,
    pub model_latency_s: f64,
    /// Share of AI-arm readers who edit the draft before finalizing.
    pub draft_edit_rate: f64,
    /// Share of cases where at least `preference_threshold` raters prefer
    /// the AI-assisted report.
    pub preference_share: f64,
    /// Probability that a rater names the true source of a report.
    pub source_detectability: f64,
    /// Probability that the reviewer builds on the AI-assisted report.
    pub review_base_ai_rate: f64,
}

impl Default for Profile {
    /// Reading times, scores and preference from the reference trial.
    fn default() -> Self {
        Profile {
            cases: 296,
            readers: 20,
            block_size: 4,
            reviewers: 3,
            raters: 5,
            preference_threshold: 3,
            standard_care: ArmProfile {
                reading_time_mean_s: 147.6,
                reading_time_sd_s: 51.1,
                quality_mean: 4.12,
                quality_sd: 0.80,
                agreement_mean: 4.14,
                agreement_sd: 0.84,
            },
            ai_assisted: ArmProfile {
                reading_time_mean_s: 120.6,
                reading_time_sd_s: 45.6,
                quality_mean: 4.36,
                quality_sd: 0.50,
                agreement_mean: 4.30,
                agreement_sd: 0.57,
            },
            quality_correlation: 1.0,
            agreement_correlation: 1.0,
            exact_moments: true,
            model_latency_s: 3.0,
            draft_edit_rate: 0.6,
            preference_share: 0.543,
            source_detectability: 0.5,
            review_base_ai_rate: 0.5,
        }
    }
}

impl Profile {
    /// Both arms share the standard-care profile and raters vote at chance.
    pub fn null() -> Self {
        let base = Profile::default();
        Profile {
            ai_assisted: base.standard_care.clone(),
            quality_correlation: 0.5,
            agreement_correlation: 0.5,
            exact_moments: false,
            preference_share: 0.5,
            ..base
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Profile(m));
        if self.cases < 2 {
            return bad(format!("cases = {}; need at least 2", self.cases));
        }
        if self.block_size == 0 || self.block_size % 2 == 1 {
            return bad(format!(
                "block_size {} must be even and positive",
                self.block_size
            ));
        }
        if self.readers == 0 || !self.readers.is_multiple_of(self.block_size) {
            return bad(format!(
                "readers = {} must be a positive multiple of block_size {}",
                self.readers, self.block_size
            ));
        }
        if self.readers > self.cases {
            return bad(format!(
                "readers = {} exceeds the {} allocations",
                self.readers, self.cases
            ));
        }
        if self.reviewers == 0 {
            return bad("reviewers must be at least 1".into());
        }
        if self.raters == 0
            || 2 * self.preference_threshold <= self.raters
            || self.preference_threshold > self.raters
        {
            return bad(format!(
                "preference_threshold {} must be a strict majority of {} raters",
                self.preference_threshold, self.raters
            ));
        }
        let finite_nonneg = |x: f64| x.is_finite() && x >= 0.0;
        if !(finite_nonneg(self.model_latency_s)) {
            return bad(format!("model_latency_s {}", self.model_latency_s));
        }
        for (name, arm) in [
            ("standard_care", &self.standard_care),
            ("ai_assisted", &self.ai_assisted),
        ] {
            if !(arm.reading_time_mean_s.is_finite()
                && arm.reading_time_mean_s > self.model_latency_s + 1.0)
            {
                return bad(format!(
                    "{name}.reading_time_mean_s {} must exceed model latency + 1 s",
                    arm.reading_time_mean_s
                ));
            }
            for (field, mean, sd) in [
                (
                    "reading_time",
                    arm.reading_time_mean_s,
                    arm.reading_time_sd_s,
                ),
                ("quality", arm.quality_mean, arm.quality_sd),
                ("agreement", arm.agreement_mean, arm.agreement_sd),
            ] {
                if !finite_nonneg(sd) {
                    return bad(format!("{name}.{field}_sd {sd} must be finite and >= 0"));
                }
                if field != "reading_time" && !(1.0..=5.0).contains(&mean) {
                    return bad(format!("{name}.{field}_mean {mean} outside 1..5"));
                }
            }
        }
        for (name, r) in [
            ("quality_correlation", self.quality_correlation),
            ("agreement_correlation", self.agreement_correlation),
        ] {
            if !(-1.0..=1.0).contains(&r) {
                return bad(format!("{name} {r} outside -1..1"));
            }
        }
        for (name, p) in [
            ("draft_edit_rate", self.draft_edit_rate),
            ("preference_share", self.preference_share),
            ("source_detectability", self.source_detectability),
            ("review_base_ai_rate", self.review_base_ai_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} {p} outside 0..1"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    /// Profile JSON; fields left out take the reference-trial defaults.
    #[arg(long, conflicts_with = "null")]
    pub profile: Option<PathBuf>,
    /// Identical arms and chance-level preference.
    #[arg(long)]
    pub null: bool,
    #[arg(long, default_value_t = 2024)]
    pub seed: u64,
    /// Override the profile's case count.
    #[arg(long)]
    pub cases: Option<usize>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Output directory for simulation.json, export.json and events.jsonl.
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

impl SimulateArgs {
    pub fn resolve(mut self) -> Result<Self, CliError> {
        if let Some(p) = &self.profile {
            self.profile = Some(resolve_input(p)?);
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(CliError::Invalid(format!(
                "--alpha {} not in (0, 1)",
                self.alpha
            )));
        }
        Ok(self)
    }

    pub fn load_profile(&self) -> Result<Profile, CliError> {
        let mut profile = match (&self.profile, self.null) {
            (Some(path), _) => read_json(path)?,
            (None, true) => Profile::null(),
            (None, false) => Profile::default(),
        };
        if let Some(n) = self.cases {
            profile.cases = n;
        }
        profile.validate()?;
        Ok(profile)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AllocationCheck {
    pub sequence_length: usize,
    pub block_size: usize,
    /// Arms of the full sequence after unblinding.
    pub ai_assisted: usize,
    pub standard_care: usize,
    pub readers_ai_assisted: usize,
    pub readers_standard_care: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub study_id: StudyId,
    pub cases: usize,
    pub events: u64,
    pub allocation: AllocationCheck,
    /// Log replayed from empty equals the live state.
    pub replay_identical: bool,
    /// Study reopened from disk (snapshot plus tail) equals the live state.
    pub reload_identical: bool,
    pub model_calls: u64,
    pub drafts_used: usize,
    /// Per-rater probability of choosing the AI-assisted report.
    pub preference_vote_probability: f64,
    pub reading_time_reduction_pct: f64,
    pub reading_time_p: Option<f64>,
    pub outcomes: OutcomeTable,
}

#[derive(Debug, Clone)]
pub struct SimulationOutcome {
    pub report: SimulationReport,
    pub export: StudyExport,
    pub events_jsonl: Vec<u8>,
}

/// Independent stream `k` of the run seed.
fn stream(seed: u64, k: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(k);
    r
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (m, var.sqrt())
}

/// Affine map of `xs` onto sample mean `mean` and sample SD `sd`.
fn match_moments(xs: &mut [f64], mean: f64, sd: f64) {
    let (m, s) = mean_sd(xs);
    for x in xs.iter_mut() {
        *x = if s > 0.0 {
            mean + sd * (*x - m) / s
        } else {
            mean
        };
    }
}

/// Log-normal reading times with the given mean and SD.
pub fn reading_times(
    rng: &mut ChaCha8Rng,
    n: usize,
    mean: f64,
    sd: f64,
    exact: bool,
    floor: f64,
) -> Vec<f64> {
    if sd == 0.0 {
        return vec![mean.max(floor); n];
    }
    let sigma2 = (1.0 + (sd / mean).powi(2)).ln();
    let dist = LogNormal::new(mean.ln() - sigma2 / 2.0, sigma2.sqrt()).expect("valid lognormal");
    let mut xs: Vec<f64> = (0..n).map(|_| dist.sample(rng)).collect();
    if exact {
        match_moments(&mut xs, mean, sd);
    }
    xs.into_iter().map(|x| x.max(floor)).collect()
}

/// Per-case mean scores on the 1..5 scale.
///
/// With `exact`, the latent normal's location and scale are adjusted so the
/// scores after clamping to 1..5 have the target sample mean and SD, where
/// that is reachable.
pub fn case_scores(mut z: Vec<f64>, mean: f64, sd: f64, exact: bool) -> Vec<f64> {
    let clamp = |m: f64, s: f64, z: &[f64]| -> Vec<f64> {
        z.iter().map(|v| (m + s * v).clamp(1.0, 5.0)).collect()
    };
    if !exact || sd == 0.0 {
        return clamp(mean, sd, &z);
    }
    match_moments(&mut z, 0.0, 1.0);
    let (mut m, mut s) = (mean, sd);
    for _ in 0..200 {
        let (gm, gs) = mean_sd(&clamp(m, s, &z));
        if (gm - mean).abs() < 1e-12 && (gs - sd).abs() < 1e-12 {
            break;
        }
        m += mean - gm;
        if gs > 0.0 {
            s *= sd / gs;
        }
        if !(m.is_finite() && s.is_finite()) {
            break;
        }
    }
    clamp(m, s, &z)
}

/// Standard normal pairs with correlation `rho`.
fn correlated_normals(rng: &mut ChaCha8Rng, n: usize, rho: f64) -> (Vec<f64>, Vec<f64>) {
    let a: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    let own = (1.0 - rho * rho).max(0.0).sqrt();
    let b = a
        .iter()
        .map(|x| {
            let e: f64 = StandardNormal.sample(rng);
            rho * x + own * e
        })
        .collect();
    (a, b)
}

/// Per-case sums of `raters` integer scores for per-case means `xs`.
///
/// With `exact`, the rounding is apportioned over the whole arm (largest
/// remainder) so the grand total matches `xs` to the nearest unit.
pub fn rater_totals(xs: &[f64], raters: usize, exact: bool) -> Vec<usize> {
    let r = raters as f64;
    if !exact {
        return xs.iter().map(|x| (x * r).round() as usize).collect();
    }
    let mut totals: Vec<usize> = xs.iter().map(|x| (x * r).floor() as usize).collect();
    let target = (xs.iter().sum::<f64>() * r).round() as usize;
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let frac = |i: usize| xs[i] * r - (xs[i] * r).floor();
    order.sort_by(|&a, &b| frac(b).total_cmp(&frac(a)).then(a.cmp(&b)));
    let missing = target.saturating_sub(totals.iter().sum());
    for &i in order.iter().take(missing) {
        totals[i] += 1;
    }
    totals
}

/// `raters` integer scores, spread by at most one, summing to `total`.
fn rater_scores(rng: &mut ChaCha8Rng, total: usize, raters: usize) -> Vec<u8> {
    let base = total / raters;
    let mut scores = vec![base as u8; raters];
    let mut order: Vec<usize> = (0..raters).collect();
    order.shuffle(rng);
    for &i in order.iter().take(total % raters) {
        scores[i] += 1;
    }
    scores
}

/// P(Binomial(n, q) >= k).
fn at_least(n: usize, k: usize, q: f64) -> f64 {
    let mut total = 0.0;
    let mut coef = 1.0;
    for i in 0..=n {
        if i > 0 {
            coef = coef * (n - i + 1) as f64 / i as f64;
        }
        if i >= k {
            total += coef * q.powi(i as i32) * (1.0 - q).powi((n - i) as i32);
        }
    }
    total
}

/// Per-vote probability `q` with `P(Binomial(raters, q) >= threshold) = share`.
pub fn vote_probability(raters: usize, threshold: usize, share: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if at_least(raters, threshold, mid) < share {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

const HISTORY_NOTES: [&str; 6] = [
    "Cough and fever for three days.",
    "Chest pain on exertion.",
    "Shortness of breath.",
    "Pre-operative evaluation.",
    "Follow-up of known pulmonary nodule.",
    "Productive cough, suspected pneumonia.",
];

const EDIT_SENTENCES: [&str; 3] = [
    "Clinical correlation recommended.",
    "Recommend follow-up radiograph.",
    "Heart size at the upper limit of normal.",
];

/// Wall-clock origin of simulated studies (ms since the Unix epoch).
const WALL_ORIGIN_MS: u64 = 1_700_000_000_000;

struct ArmDraws {
    time: Vec<f64>,
    /// Per-case sums of rater scores.
    quality: Vec<usize>,
    agreement: Vec<usize>,
}

/// Both arms' draws; case `i` of one arm pairs with case `i` of the other.
fn draw_arms(profile: &Profile, seed: u64) -> (ArmDraws, ArmDraws) {
    let n = profile.cases;
    let exact = profile.exact_moments;
    let (sc, ai) = (&profile.standard_care, &profile.ai_assisted);
    let time = |arm: &ArmProfile, k: u64, floor: f64| {
        reading_times(
            &mut stream(seed, k),
            n,
            arm.reading_time_mean_s,
            arm.reading_time_sd_s,
            exact,
            floor,
        )
    };
    let scores = |k: u64, rho: f64, mean: fn(&ArmProfile) -> (f64, f64)| {
        let (za, zb) = correlated_normals(&mut stream(seed, k), n, rho);
        let ((ma, sa), (mb, sb)) = (mean(sc), mean(ai));
        (
            rater_totals(&case_scores(za, ma, sa, exact), profile.raters, exact),
            rater_totals(&case_scores(zb, mb, sb, exact), profile.raters, exact),
        )
    };
    let (q_sc, q_ai) = scores(12, profile.quality_correlation, |a| {
        (a.quality_mean, a.quality_sd)
    });
    let (a_sc, a_ai) = scores(13, profile.agreement_correlation, |a| {
        (a.agreement_mean, a.agreement_sd)
    });
    (
        ArmDraws {
            time: time(sc, 10, 1.0),
            quality: q_sc,
            agreement: a_sc,
        },
        ArmDraws {
            time: time(ai, 11, profile.model_latency_s + 1.0),
            quality: q_ai,
            agreement: a_ai,
        },
    )
}

/// Votes for the AI-assisted report in each case.
///
/// With `exact`, exactly `round(share * n)` cases reach the threshold and
/// each case's count is drawn from the vote binomial conditioned on its side
/// of the threshold.
fn preference_votes(profile: &Profile, q: f64, seed: u64) -> Vec<usize> {
    let mut rng = stream(seed, 42);
    let (n, k, t) = (profile.cases, profile.raters, profile.preference_threshold);
    let draw = |rng: &mut ChaCha8Rng| (0..k).filter(|_| rng.random_bool(q)).count();
    if !profile.exact_moments {
        return (0..n).map(|_| draw(&mut rng)).collect();
    }
    let wins = (profile.preference_share * n as f64).round() as usize;
    let mut won = vec![false; n];
    for i in rand::seq::index::sample(&mut rng, n, wins) {
        won[i] = true;
    }
    won.into_iter()
        .map(|w| loop {
            let v = draw(&mut rng);
            if (v >= t) == w {
                break v;
            }
        })
        .collect()
}

fn with_study<R>(
    service: &StudyService,
    id: &StudyId,
    f: impl FnOnce(&mut Study) -> Result<R, cxrkit_study::StudyError>,
) -> Result<R, CliError> {
    Ok(service.with_study(id, f)?)
}

/// Runs a complete study. Deterministic in (`profile`, `seed`).
pub async fn run_simulation(
    profile: &Profile,
    seed: u64,
    alpha: f64,
    labeler: &Labeler,
) -> Result<SimulationOutcome, CliError> {
    profile.validate()?;
    let n = profile.cases;
    let clock = Arc::new(ManualClock::new(0, WALL_ORIGIN_MS));
    let model = Arc::new(
        InProcessModel::new(
            seed,
            FaultPlan {
                latency: Duration::from_secs_f64(profile.model_latency_s),
                ..FaultPlan::default()
            },
        )
        .with_manual_clock(clock.clone()),
    );
    let workdir =
        tempfile::tempdir().map_err(|e| CliError::io(std::env::temp_dir().as_path(), e))?;
    let service = StudyService::with_data_dir(model.clone(), clock.clone(), workdir.path())?
        .with_labeler(labeler.clone());
    let reviewers: Vec<cxrkit_study::ReviewerId> = (1..=profile.reviewers)
        .map(|i| format!("senior-{i:02}").into())
        .collect();
    let config = StudyConfig {
        reviewers: reviewers.clone(),
        raters_per_item: profile.raters,
        ..StudyConfig::default()
    };
    let id = service.create_study(Some(StudyId::new("sim-0001")), config)?;

    // Randomize readers.
    let alloc_seed = seed;
    with_study(&service, &id, |s| {
        s.generate_allocation(alloc_seed, n, profile.block_size)
    })?;
    let mut groups: BTreeMap<Arm, Vec<ReaderId>> = BTreeMap::new();
    for i in 1..=profile.readers {
        let reader = ReaderId::new(format!("reader-{i:02}"));
        let a = with_study(&service, &id, |s| s.assign_reader(reader.clone()))?;
        groups.entry(a.arm).or_default().push(reader);
    }

    let (sc, ai) = draw_arms(profile, seed);
    let mut pick = stream(seed, 30);
    let mut behaviour = stream(seed, 31);

    let mut drafts_used = 0;
    for i in 0..n {
        let case_id = CaseId::new(format!("case-{:04}", i + 1));
        let history = HISTORY_NOTES.choose(&mut pick).unwrap().to_string();
        let intake = CaseIntake {
            case_id: case_id.clone(),
            patient_meta: BTreeMap::new(),
            image_refs: vec![format!("{case_id}/pa.dcm")],
            history_note: history.clone(),
            admitted: true,
        };
        with_study(&service, &id, |s| s.register_case(intake))?;
        let request = ModelRequest {
            case_id: case_id.clone(),
            image_refs: vec![format!("{case_id}/pa.dcm")],
            history_note: history,
        };
        // A reader's own report: a template read with a reader-specific seed.
        let own_report = |salt: u64| template_response(&request, seed ^ salt).report_text;

        let sc_reader = groups[&Arm::StandardCare]
            .choose(&mut pick)
            .unwrap()
            .clone();
        let ai_reader = groups[&Arm::AiAssisted].choose(&mut pick).unwrap().clone();

        let view = with_study(&service, &id, |s| s.start_session(&case_id, &sc_reader))?;
        clock.advance(sc.time[i]);
        let sc_text = own_report(0x5c);
        let sc_final = with_study(&service, &id, |s| {
            s.finalize_session(&view.session.session_id, &sc_text)
        })?;

        let view = with_study(&service, &id, |s| s.start_session(&case_id, &ai_reader))?;
        let sid = view.session.session_id.clone();
        let started = clock_now(&clock);
        let text = match service.request_ai_draft(&id, &sid).await {
            Ok((_, draft)) => {
                drafts_used += 1;
                if behaviour.random_bool(profile.draft_edit_rate) {
                    let extra = EDIT_SENTENCES.choose(&mut behaviour).unwrap();
                    format!("{} {extra}", draft.report_text)
                } else {
                    draft.report_text
                }
            }
            Err(_) => own_report(0xa1),
        };
        let spent = clock_now(&clock) - started;
        clock.advance((ai.time[i] - spent).max(0.0));
        let ai_final = with_study(&service, &id, |s| s.finalize_session(&sid, &text))?;

        let base: ReportId = if behaviour.random_bool(profile.review_base_ai_rate) {
            ai_final.session.final_report().cloned()
        } else {
            sc_final.session.final_report().cloned()
        }
        .expect("finalized sessions have a report");
        let reviewer = reviewers.choose(&mut pick).unwrap().clone();
        with_study(&service, &id, |s| {
            s.senior_review(&case_id, &reviewer, &base, None)
        })?;
    }

    let q = vote_probability(
        profile.raters,
        profile.preference_threshold,
        profile.preference_share,
    );
    let raters: Vec<RaterId> = (1..=profile.raters)
        .map(|i| RaterId::new(format!("rater-{i:02}")))
        .collect();
    let case_index = |c: &CaseId| -> usize {
        c.as_str()
            .trim_start_matches("case-")
            .parse::<usize>()
            .expect("simulated case id")
            - 1
    };
    let mut batch_seeds = stream(seed, 40);
    let mut score_rng = stream(seed, 41);
    let mut vote_rng = stream(seed, 44);
    let ai_votes = preference_votes(profile, q, seed);
    let mut guess_rng = stream(seed, 43);
    for instrument in Instrument::ALL {
        let batch_seed = batch_seeds.random::<u64>();
        let (_, items) = with_study(&service, &id, |s| {
            s.build_evaluation_batch(instrument, batch_seed, false)
        })?;
        let key = with_study(&service, &id, |s| Ok(s.state().key.clone()))?;
        let mut responses: Vec<(ItemId, RaterId, Response)> = Vec::new();
        for item in &items {
            let entry = key.get(&item.item_id)?;
            let i = case_index(&entry.case_id);
            let per_rater: Vec<Response> = match instrument {
                Instrument::LikertQuality | Instrument::RadpeerAgreement => {
                    let draws = match entry.sources[0] {
                        Provenance::AiAssisted => &ai,
                        _ => &sc,
                    };
                    let target = if instrument == Instrument::LikertQuality {
                        draws.quality[i]
                    } else {
                        draws.agreement[i]
                    };
                    rater_scores(&mut score_rng, target, profile.raters)
                        .into_iter()
                        .map(|v| {
                            if instrument == Instrument::LikertQuality {
                                Response::Likert(v)
                            } else {
                                Response::Agreement(v)
                            }
                        })
                        .collect()
                }
                Instrument::PairwisePreference => {
                    let ai_first = entry.sources[0] == Provenance::AiAssisted;
                    let mut prefers_ai = vec![false; profile.raters];
                    for v in prefers_ai.iter_mut().take(ai_votes[i]) {
                        *v = true;
                    }
                    prefers_ai.shuffle(&mut vote_rng);
                    prefers_ai
                        .into_iter()
                        .map(|p| {
                            Response::Choice(if p == ai_first {
                                Position::First
                            } else {
                                Position::Second
                            })
                        })
                        .collect()
                }
                Instrument::SourceGuess => {
                    let is_ai = entry.sources[0] == Provenance::AiGenerated;
                    (0..profile.raters)
                        .map(|_| {
                            let right = guess_rng.random_bool(profile.source_detectability);
                            Response::Guess(if is_ai == right {
                                SourceGuess::Ai
                            } else {
                                SourceGuess::Published
                            })
                        })
                        .collect()
                }
            };
            for (r, resp) in raters.iter().zip(per_rater) {
                responses.push((item.item_id.clone(), r.clone(), resp));
            }
        }
        for (item, rater, response) in responses {
            with_study(&service, &id, |s| {
                s.record_evaluation(item, rater, response)
            })?;
        }
    }

    let (export, replay_identical, events) = with_study(&service, &id, |s| {
        let export = export_study(s.state(), labeler)?;
        let replayed = s.replayed_state()?;
        Ok((export, &replayed == s.state(), s.state().last_seq))
    })?;
    let live = with_study(&service, &id, |s| Ok(s.state().clone()))?;
    let reopened = Study::open(workdir.path(), &id, clock.clone())?;
    let reload_identical = reopened.state() == &live;
    let events_path = cxrkit_study::store::events_path(workdir.path(), &id);
    let events_jsonl = std::fs::read(&events_path).map_err(|e| CliError::io(&events_path, e))?;

    let arms = unblind(generate_allocation(alloc_seed, n, profile.block_size)?);
    let allocation = AllocationCheck {
        sequence_length: arms.len(),
        block_size: profile.block_size,
        ai_assisted: arms.iter().filter(|a| **a == Arm::AiAssisted).count(),
        standard_care: arms.iter().filter(|a| **a == Arm::StandardCare).count(),
        readers_ai_assisted: groups.get(&Arm::AiAssisted).map_or(0, Vec::len),
        readers_standard_care: groups.get(&Arm::StandardCare).map_or(0, Vec::len),
    };

    let table = outcomes(&export, alpha, profile.preference_threshold)?;
    let time_row = table
        .rows
        .iter()
        .find(|r| r.percent_reduction.is_some())
        .expect("reading time row");
    let report = SimulationReport {
        study_id: id,
        cases: n,
        events,
        allocation,
        replay_identical,
        reload_identical,
        model_calls: model.calls(),
        drafts_used,
        preference_vote_probability: q,
        reading_time_reduction_pct: time_row.percent_reduction.unwrap(),
        reading_time_p: time_row.p,
        outcomes: table,
    };
    Ok(SimulationOutcome {
        report,
        export,
        events_jsonl,
    })
}

pub fn render_summary(r: &SimulationReport) -> String {
    let a = &r.allocation;
    let mut out = format!(
        "study {}: {} cases, {} events, {} model calls, {} drafts used\n\
         allocation: {} envelopes, {} AI-assisted / {} standard care; readers {} / {}\n\
         replay identical: {}  reload identical: {}\n\
         reading time reduction {:.1}% (p {})\n\n",
        r.study_id,
        r.cases,
        r.events,
        r.model_calls,
        r.drafts_used,
        a.sequence_length,
        a.ai_assisted,
        a.standard_care,
        a.readers_ai_assisted,
        a.readers_standard_care,
        r.replay_identical,
        r.reload_identical,
        r.reading_time_reduction_pct,
        crate::stats::render_p(r.reading_time_p),
    );
    out.push_str(&crate::stats::render_outcome_table(&r.outcomes));
    out
}

fn clock_now(clock: &ManualClock) -> f64 {
    use cxrkit_study::Clock;
    cxrkit_study::clock::us_to_secs(clock.monotonic_us())
}

pub fn model_version() -> &'static str {
    MOCK_MODEL_VERSION
}
