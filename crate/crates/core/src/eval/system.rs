//! Seeded task suites judged by scene predicates.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::runtime::Runtime;
use crate::skills::hand::HandState;
use crate::task::{classify_failure, run_task, Backend, FailureClass, Goal, LlmBackend, LlmConfig, ScriptedBackend, TaskResult};
use crate::world::{Scene, ScenarioSpec};

/// Shift of the spatial-relation region along the furniture's left axis, meters.
pub const LEFT_OF_SHIFT: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Category {
    SimpleArm,
    SimpleNav,
    ExplicitPlacement,
    LinguisticVariation,
    SpatialRelation,
    LongHorizon2obj,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::SimpleArm,
        Category::SimpleNav,
        Category::ExplicitPlacement,
        Category::LinguisticVariation,
        Category::SpatialRelation,
        Category::LongHorizon2obj,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::SimpleArm => "simple-arm",
            Category::SimpleNav => "simple-nav",
            Category::ExplicitPlacement => "explicit-placement",
            Category::LinguisticVariation => "linguistic-variation",
            Category::SpatialRelation => "spatial-relation",
            Category::LongHorizon2obj => "long-horizon-2obj",
        }
    }

    pub fn default_trials(self) -> usize {
        match self {
            Category::SimpleArm | Category::SimpleNav => 5,
            Category::LongHorizon2obj => 10,
            _ => 30,
        }
    }

    /// Simple categories also run every trial with a paraphrased instruction.
    pub fn has_paraphrases(self) -> bool {
        matches!(self, Category::SimpleArm | Category::SimpleNav)
    }

    fn salt(self) -> u64 {
        self as u64 * 0x9e37_79b9
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Category::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| {
            let names: Vec<_> = Category::ALL.iter().map(|c| c.name()).collect();
            format!("unknown category `{s}` (expected one of {})", names.join(", "))
        })
    }
}

const ARM_EXPLICIT: [(&str, &str); 2] = [("READY", "raise both hands"), ("HOLD", "hold your hands in front of you")];
const ARM_PARAPHRASES: [(&str, &[&str]); 2] = [
    ("READY", &["lift your arms", "put your hands up", "get ready to grab something", "raise your arms up"]),
    ("HOLD", &["bring your hands in front", "keep your arms close to your body", "take the carrying position"]),
];
const NAV_PARAPHRASES: [&str; 4] = ["walk to the {f}", "head over to the {f}", "approach the {f}", "navigate to the {f}"];
const PLACE_PARAPHRASES: [&str; 6] = [
    "move the {c} box to the {dst}",
    "put the {c} box on the {dst}",
    "bring the {c} box over to the {dst}",
    "grab the {c} box and put it on the {dst}",
    "the {c} box belongs on the {dst}",
    "transfer the {c} box from the {src} to the {dst}",
];

/// One generated task: scene, instruction and the predicate that judges it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub seed: u64,
    pub variant: String,
    pub instruction: String,
    pub goal: Goal,
    pub scene: Scene,
}

fn fill(template: &str, c: &str, src: &str, dst: &str) -> String {
    template.replace("{c}", c).replace("{src}", src).replace("{dst}", dst).replace("{f}", dst)
}

/// Draws a box that rests on furniture and a different destination surface.
fn pick_move(scene: &Scene, rng: &mut ChaCha8Rng) -> Option<(String, String, String)> {
    let movable: Vec<_> = scene.boxes.iter().filter(|b| matches!(&b.status, crate::world::BoxStatus::Resting { on } if on.id() != "floor")).collect();
    let b = movable.choose(rng)?;
    let src = match &b.status {
        crate::world::BoxStatus::Resting { on } => on.id().to_string(),
        _ => return None,
    };
    let dsts: Vec<_> = scene.furniture.iter().map(|f| f.id()).filter(|f| *f != src).collect();
    let dst = dsts.choose(rng)?;
    Some((b.color.clone(), src, dst.to_string()))
}

/// Trials for trial index `i` (seed `seed + i`): one, or an explicit and a
/// paraphrased one for the simple categories.
pub fn trials(cfg: &Config, category: Category, seed: u64) -> Vec<Trial> {
    let scene = ScenarioSpec::with_seed(seed).sample();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ category.salt());
    let trial = |variant: &str, instruction: String, goal: Goal| Trial {
        seed,
        variant: variant.into(),
        instruction,
        goal,
        scene: scene.clone(),
    };
    match category {
        Category::SimpleArm => {
            let k = (seed as usize) % ARM_EXPLICIT.len();
            let (state, text) = ARM_EXPLICIT[k];
            let state: HandState = state.parse().expect("canonical name");
            let goal = Goal::hands(state, &cfg.hands);
            let para = ARM_PARAPHRASES[k].1;
            let p = para[(seed as usize / ARM_EXPLICIT.len()) % para.len()];
            vec![trial("explicit", text.into(), goal.clone()), trial("paraphrased", p.into(), goal)]
        }
        Category::SimpleNav => {
            let f = &scene.furniture[(seed as usize) % scene.furniture.len()];
            let a = f.approach_pose(crate::task::APPROACH_STANDOFF, 0.0, 0.0);
            let goal = Goal::RootNear { pose: [a.x, a.y, a.yaw], tolerance: 0.2, yaw_tolerance: 0.3 };
            let p = NAV_PARAPHRASES[(seed as usize) % NAV_PARAPHRASES.len()];
            vec![trial("explicit", format!("go to the {}", f.id()), goal.clone()), trial("paraphrased", fill(p, "", "", f.id()), goal)]
        }
        Category::ExplicitPlacement | Category::LinguisticVariation => {
            let Some((c, src, dst)) = pick_move(&scene, &mut rng) else { return Vec::new() };
            let goal = Goal::Resting { object: format!("{c}_box"), surface: dst.clone() };
            let text = if category == Category::ExplicitPlacement {
                format!("pick up the {c} box from the {src} and place it on the {dst}")
            } else {
                fill(PLACE_PARAPHRASES.choose(&mut rng).expect("non-empty"), &c, &src, &dst)
            };
            vec![trial("explicit", text, goal)]
        }
        Category::SpatialRelation => {
            let Some((c, _, dst)) = pick_move(&scene, &mut rng) else { return Vec::new() };
            let goal = Goal::LeftOf { object: format!("{c}_box"), furniture: dst.clone(), shift: LEFT_OF_SHIFT };
            vec![trial("explicit", format!("place the {c} box to the left of the {dst}"), goal)]
        }
        Category::LongHorizon2obj => {
            let on_table: Vec<_> = scene.boxes.iter().filter(|b| b.is_resting_on("table")).map(|b| b.color.clone()).collect();
            if on_table.len() < 2 {
                return Vec::new();
            }
            let dst = *["sofa", "bed"].choose(&mut rng).expect("non-empty");
            let goals = on_table[..2].iter().map(|c| Goal::Resting { object: format!("{c}_box"), surface: dst.into() }).collect();
            let text = format!("put the {} box and the {} box on the {dst}", on_table[0], on_table[1]);
            vec![trial("explicit", text, Goal::All { goals })]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "snake_case")]
pub enum BackendKind {
    Scripted,
    Llm(LlmConfig),
}

impl BackendKind {
    fn make(&self) -> Box<dyn Backend> {
        match self {
            BackendKind::Scripted => Box::new(ScriptedBackend::new()),
            BackendKind::Llm(c) => Box::new(LlmBackend::new(c.clone())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            BackendKind::Scripted => "scripted",
            BackendKind::Llm(_) => "llm",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub seed: u64,
    pub variant: String,
    pub instruction: String,
    pub success: bool,
    pub steps: usize,
    pub sim_time: f64,
    pub failure: FailureClass,
}

/// Runs one trial headless and judges it.
pub fn run_trial(cfg: &Config, trial: &Trial, backend: &BackendKind) -> (TrialRecord, TaskResult) {
    let mut rt = Runtime::new(cfg.clone(), trial.scene.clone());
    let mut b = backend.make();
    let (result, _) = run_task(&trial.instruction, b.as_mut(), &mut rt, cfg.max_iterations, Some(&trial.goal));
    let failure = classify_failure(&result, &rt.scene, Some(&trial.goal));
    let record = TrialRecord {
        seed: trial.seed,
        variant: trial.variant.clone(),
        instruction: trial.instruction.clone(),
        success: result.success,
        steps: result.steps,
        sim_time: result.elapsed_sim_time,
        failure,
    };
    (record, result)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub trials: usize,
    pub successes: usize,
    /// Over successful trials; `None` when there are none.
    pub mean_steps: Option<f64>,
    pub mean_time: Option<f64>,
}

impl VariantSummary {
    fn of<'a>(records: impl Iterator<Item = &'a TrialRecord>) -> Self {
        let all: Vec<_> = records.collect();
        let ok: Vec<_> = all.iter().filter(|r| r.success).collect();
        let mean = |f: &dyn Fn(&TrialRecord) -> f64| (!ok.is_empty()).then(|| ok.iter().map(|r| f(r)).sum::<f64>() / ok.len() as f64);
        Self { trials: all.len(), successes: ok.len(), mean_steps: mean(&|r| r.steps as f64), mean_time: mean(&|r| r.sim_time) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemReport {
    pub category: Category,
    pub backend: String,
    pub seed: u64,
    pub trials: usize,
    pub successes: usize,
    pub failures: usize,
    pub mean_steps: Option<f64>,
    pub mean_time: Option<f64>,
    /// Failure counts by class label, explicit variant only.
    pub histogram: BTreeMap<String, usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub paraphrased: Option<VariantSummary>,
    pub records: Vec<TrialRecord>,
}

impl SystemReport {
    /// Text table in the shape of a success / steps / time summary.
    pub fn table(&self) -> String {
        let opt = |v: Option<f64>, d: usize| v.map_or("-".to_string(), |x| format!("{x:.d$}"));
        let mut s = String::from("| Task | Success | Steps | Time (s) |\n|---|---|---|---|\n");
        s.push_str(&format!(
            "| {} | {}/{} | {} | {} |\n",
            self.category,
            self.successes,
            self.trials,
            opt(self.mean_steps, 1),
            opt(self.mean_time, 1)
        ));
        if let Some(p) = &self.paraphrased {
            s.push_str(&format!(
                "| {} (paraphrased) | {}/{} | {} | {} |\n",
                self.category,
                p.successes,
                p.trials,
                opt(p.mean_steps, 1),
                opt(p.mean_time, 1)
            ));
        }
        let hist: Vec<String> = self.histogram.iter().map(|(k, v)| format!("{k}: {v}")).collect();
        s.push_str(&format!("failures ({}): {}\n", self.failures, if hist.is_empty() { "none".into() } else { hist.join(", ") }));
        s
    }
}

/// Runs `trials` seeded trials of `category`; trial `i` uses seed `seed + i`.
pub fn run_system_suite(cfg: &Config, category: Category, trials: usize, seed: u64, backend: &BackendKind) -> SystemReport {
    let mut records = Vec::new();
    for i in 0..trials {
        for t in self::trials(cfg, category, seed + i as u64) {
            records.push(run_trial(cfg, &t, backend).0);
        }
    }
    let explicit = || records.iter().filter(|r| r.variant == "explicit");
    let main = VariantSummary::of(explicit());
    let mut histogram: BTreeMap<String, usize> =
        [FailureClass::LlmError, FailureClass::Manipulation, FailureClass::Locomotion].iter().map(|c| (c.label().to_string(), 0)).collect();
    for r in explicit().filter(|r| !r.success) {
        *histogram.entry(r.failure.label().to_string()).or_insert(0) += 1;
    }
    let paraphrased = category.has_paraphrases().then(|| VariantSummary::of(records.iter().filter(|r| r.variant == "paraphrased")));
    SystemReport {
        category,
        backend: backend.name().into(),
        seed,
        trials: main.trials,
        successes: main.successes,
        failures: main.trials - main.successes,
        mean_steps: main.mean_steps,
        mean_time: main.mean_time,
        histogram,
        paraphrased,
        records,
    }
}
