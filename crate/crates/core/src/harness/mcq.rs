//! Multiple-choice questions generated from SSG annotations.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use log::warn;
use rand::seq::{IteratorRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, SsgError};
use crate::schema::{FrameStructure, SsgAnnotation};

/// Appended to every rendered question.
pub const ANSWER_INSTRUCTION: &str = "Answer with the option's number from the given choices directly.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum McqTask {
    Verb,
    ObjectSrv,
    VerbSrv,
    PersonSrv,
}

impl McqTask {
    pub const ALL: [McqTask; 4] = [McqTask::Verb, McqTask::ObjectSrv, McqTask::VerbSrv, McqTask::PersonSrv];

    pub fn as_str(self) -> &'static str {
        match self {
            McqTask::Verb => "verb",
            McqTask::ObjectSrv => "object_srv",
            McqTask::VerbSrv => "verb_srv",
            McqTask::PersonSrv => "person_srv",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum McqPolicy {
    /// Ground truth plus three sampled distractors.
    FourOptions,
    /// The full candidate set of the role (or predicate list).
    AllOptions,
}

impl FromStr for McqPolicy {
    type Err = SsgError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "four_options" => Ok(McqPolicy::FourOptions),
            "all_options" => Ok(McqPolicy::AllOptions),
            other => Err(SsgError::Config(format!("unknown policy '{other}'"))),
        }
    }
}

impl fmt::Display for McqPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            McqPolicy::FourOptions => "four_options",
            McqPolicy::AllOptions => "all_options",
        })
    }
}

/// One question with its answer. `answer` is a 0-based index into
/// `options`; files store the 1-based option number.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct McqItem {
    pub id: String,
    pub task: McqTask,
    pub question: String,
    pub options: Vec<String>,
    pub answer: usize,
}

impl McqItem {
    /// Question, numbered options and the answering instruction.
    pub fn prompt(&self) -> String {
        let mut s = self.question.clone();
        for (i, o) in self.options.iter().enumerate() {
            s.push_str(&format!("\n{}. {}", i + 1, o));
        }
        s.push('\n');
        s.push_str(ANSWER_INSTRUCTION);
        s
    }
}

fn words(name: &str) -> String {
    name.replace('_', " ")
}

fn frame_rng(ann: &SsgAnnotation, policy: McqPolicy, seed: u64) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(policy.to_string().as_bytes());
    h.update([0]);
    h.update(ann.video_id.as_bytes());
    h.update([0]);
    h.update(ann.frame_id.as_bytes());
    let d = h.finalize();
    ChaCha8Rng::from_seed(d.into())
}

fn options(rng: &mut ChaCha8Rng, gt: &str, vocab: &[String], policy: McqPolicy, id: &str) -> Result<(Vec<String>, usize)> {
    if !vocab.iter().any(|v| v == gt) {
        return Err(SsgError::Misaligned(format!("{id}: answer '{gt}' not among candidates")));
    }
    let mut opts: Vec<String> = match policy {
        McqPolicy::FourOptions if vocab.len() >= 4 => {
            let mut o: Vec<String> = vocab
                .iter()
                .filter(|v| v.as_str() != gt)
                .choose_multiple(rng, 3)
                .into_iter()
                .cloned()
                .collect();
            o.push(gt.to_string());
            o
        }
        McqPolicy::FourOptions => {
            warn!("{id}: only {} candidates, using all of them", vocab.len());
            vocab.to_vec()
        }
        McqPolicy::AllOptions => vocab.to_vec(),
    };
    opts.shuffle(rng);
    let answer = opts.iter().position(|o| o == gt).expect("gt present");
    Ok((opts, answer))
}

/// Questions for one frame, in the order: one verb question per relation,
/// object roles, verb roles per relation, person roles. Unsure and
/// unannotated roles get no question.
pub fn generate_mcq(ann: &SsgAnnotation, schema: &FrameStructure, policy: McqPolicy, seed: u64) -> Result<Vec<McqItem>> {
    let mut rng = frame_rng(ann, policy, seed);
    let mut items = Vec::new();
    let mut push = |rng: &mut ChaCha8Rng, task: McqTask, question: String, gt: &str, vocab: &[String]| -> Result<()> {
        let id = format!("{}/{}/q{:03}", ann.video_id, ann.frame_id, items.len());
        let (options, answer) = options(rng, gt, vocab, policy, &id)?;
        items.push(McqItem {
            id,
            task,
            question,
            options,
            answer,
        });
        Ok(())
    };
    let category_of = |id: &str| -> Result<&str> {
        ann.object(id)
            .map(|(_, o)| o.category.as_str())
            .ok_or_else(|| SsgError::Misaligned(format!("unknown object '{id}'")))
    };

    for rel in &ann.relations {
        let object = category_of(&rel.object_instance_id)?;
        push(
            &mut rng,
            McqTask::Verb,
            format!("What is the verb predicate between person and {}?", words(object)),
            &rel.predicate,
            schema.verb_predicates(),
        )?;
    }
    let scored = |roles: &[String], srv: &indexmap::IndexMap<String, String>, unsure: &[String]| -> Vec<(String, String)> {
        roles
            .iter()
            .filter(|r| !unsure.contains(r))
            .filter_map(|r| srv.get(r).map(|v| (r.clone(), v.clone())))
            .collect()
    };
    for o in &ann.objects {
        let c = schema
            .category_index(&o.category)
            .ok_or_else(|| SsgError::Misaligned(format!("unknown category '{}'", o.category)))?;
        for (role, value) in scored(schema.object_roles(c), &o.srv, &o.unsure) {
            push(
                &mut rng,
                McqTask::ObjectSrv,
                format!("What is the {} of the {}?", words(&role), words(&o.category)),
                &value,
                schema.role_values(&role),
            )?;
        }
    }
    for rel in &ann.relations {
        let object = category_of(&rel.object_instance_id)?;
        let p = schema
            .predicate_index(&rel.predicate)
            .ok_or_else(|| SsgError::Misaligned(format!("unknown predicate '{}'", rel.predicate)))?;
        for (role, value) in scored(schema.verb_roles(p), &rel.srv, &rel.unsure) {
            push(
                &mut rng,
                McqTask::VerbSrv,
                format!(
                    "What is the {} used by the person for {} the {}?",
                    words(&role),
                    words(&rel.predicate),
                    words(object)
                ),
                &value,
                schema.role_values(&role),
            )?;
        }
    }
    for (role, value) in scored(schema.person_roles(), &ann.person.srv, &ann.person.unsure) {
        push(
            &mut rng,
            McqTask::PersonSrv,
            format!("What is the {} of the person?", words(&role)),
            &value,
            schema.role_values(&role),
        )?;
    }
    Ok(items)
}

/// Closed-form question count: one per relation plus one per scored role.
pub fn expected_question_count(ann: &SsgAnnotation, schema: &FrameStructure) -> usize {
    let scored = |roles: &[String], srv: &indexmap::IndexMap<String, String>, unsure: &[String]| {
        roles.iter().filter(|r| !unsure.contains(r) && srv.contains_key(*r)).count()
    };
    let objects: usize = ann
        .objects
        .iter()
        .filter_map(|o| schema.category_index(&o.category).map(|c| scored(schema.object_roles(c), &o.srv, &o.unsure)))
        .sum();
    let verbs: usize = ann
        .relations
        .iter()
        .filter_map(|r| schema.predicate_index(&r.predicate).map(|p| scored(schema.verb_roles(p), &r.srv, &r.unsure)))
        .sum();
    ann.relations.len() + objects + verbs + scored(schema.person_roles(), &ann.person.srv, &ann.person.unsure)
}

/// Question-file line (no answer).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub id: String,
    pub task: McqTask,
    pub question: String,
    pub options: Vec<String>,
    pub prompt: String,
}

/// Key-file line: the question plus its 1-based answer number.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyRecord {
    pub id: String,
    pub task: McqTask,
    pub question: String,
    pub options: Vec<String>,
    pub answer: usize,
}

/// Answer-file line; `answer` is the chosen 1-based option number.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerRecord {
    pub id: String,
    pub answer: Option<usize>,
}

fn jsonl<T: Serialize>(records: impl IntoIterator<Item = T>) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(&r).expect("record serializes"));
        out.push('\n');
    }
    out
}

/// Question file (JSON lines).
pub fn write_questions(items: &[McqItem]) -> String {
    jsonl(items.iter().map(|i| QuestionRecord {
        id: i.id.clone(),
        task: i.task,
        question: i.question.clone(),
        options: i.options.clone(),
        prompt: i.prompt(),
    }))
}

/// Key file (JSON lines).
pub fn write_key(items: &[McqItem]) -> String {
    jsonl(items.iter().map(|i| KeyRecord {
        id: i.id.clone(),
        task: i.task,
        question: i.question.clone(),
        options: i.options.clone(),
        answer: i.answer + 1,
    }))
}

pub fn parse_jsonl<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<T>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| serde_json::from_str(l).map_err(|e| SsgError::Parse(format!("line {}: {e}", n + 1))))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McqScore {
    /// `(correct, total)` per task.
    pub per_task: BTreeMap<McqTask, (usize, usize)>,
    pub correct: usize,
    pub total: usize,
}

impl McqScore {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }

    pub fn task_accuracy(&self, task: McqTask) -> Option<f64> {
        self.per_task
            .get(&task)
            .filter(|(_, n)| *n > 0)
            .map(|(c, n)| *c as f64 / *n as f64)
    }
}

impl fmt::Display for McqScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "accuracy={:.6}", self.accuracy())?;
        writeln!(f, "count.items={}", self.total)?;
        for (task, (c, n)) in &self.per_task {
            writeln!(f, "{}.accuracy={:.6}", task.as_str(), *c as f64 / (*n).max(1) as f64)?;
            writeln!(f, "count.{}={}", task.as_str(), n)?;
        }
        Ok(())
    }
}

/// Accuracy per task and overall. Unanswered items count as wrong; answers
/// to unknown ids are ignored.
pub fn score_mcq(answers: &[AnswerRecord], key: &[KeyRecord]) -> Result<McqScore> {
    let mut seen = HashSet::new();
    for k in key {
        if !seen.insert(k.id.as_str()) {
            return Err(SsgError::DuplicateId(format!("key id '{}'", k.id)));
        }
    }
    let mut given: BTreeMap<&str, Option<usize>> = BTreeMap::new();
    for a in answers {
        if given.insert(a.id.as_str(), a.answer).is_some() {
            return Err(SsgError::DuplicateId(format!("answer id '{}'", a.id)));
        }
        if !seen.contains(a.id.as_str()) {
            warn!("answer for unknown question '{}' ignored", a.id);
        }
    }
    let mut score = McqScore {
        per_task: BTreeMap::new(),
        correct: 0,
        total: 0,
    };
    for k in key {
        let ok = given.get(k.id.as_str()).copied().flatten() == Some(k.answer);
        let e = score.per_task.entry(k.task).or_insert((0, 0));
        e.0 += ok as usize;
        e.1 += 1;
        score.correct += ok as usize;
        score.total += 1;
    }
    Ok(score)
}
