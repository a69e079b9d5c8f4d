use std::collections::{HashMap, VecDeque};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{SupervisionLedger, Teacher};
use crate::error::{Error, Result};
use crate::math::Rng;
use crate::metrics::MixWeights;
use crate::qgen::{QType, Question};
use crate::world::{
    Caption, CaptionSource, Scene, SceneId, Vocabulary, WordId, MAX_CAPTION_LEN, UNK,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Answer,
    Score,
    Write,
}

impl TaskKind {
    fn response_kind(self) -> ResponseKind {
        match self {
            TaskKind::Answer => ResponseKind::Answer,
            TaskKind::Score => ResponseKind::Score,
            TaskKind::Write => ResponseKind::Caption,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectView {
    pub slot: u32,
    pub category: String,
    pub attributes: Vec<String>,
    pub action: Option<String>,
}

/// Scene rendered with words instead of ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneView {
    pub id: SceneId,
    pub objects: Vec<ObjectView>,
}

impl SceneView {
    pub fn new(scene: &Scene, vocab: &Vocabulary) -> Self {
        SceneView {
            id: scene.id,
            objects: scene
                .objects
                .iter()
                .map(|o| ObjectView {
                    slot: o.slot,
                    category: vocab.word(o.category).to_string(),
                    attributes: o
                        .attributes
                        .iter()
                        .map(|a| vocab.word(*a).to_string())
                        .collect(),
                    action: o.action.map(|a| vocab.word(a).to_string()),
                })
                .collect(),
        }
    }
}

/// A unit of work for a person.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: u64,
    pub kind: TaskKind,
    pub scene: SceneView,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<QuestionView>,
    /// Captions to score.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub candidates: Vec<String>,
    /// Number of captions to write.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub count: usize,
    pub ledger_total: f64,
}

fn is_zero(n: &usize) -> bool {
    *n == 0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionView {
    pub qtype: QType,
    pub text: String,
    pub target_step: usize,
    pub target_pos: crate::world::Pos,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResponseKind {
    Answer,
    Score,
    Caption,
}

/// Body of `POST /tasks/{id}/response`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResponse {
    pub kind: ResponseKind,
    pub payload: Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RespondOutcome {
    Accepted,
    /// The task already had a response; nothing changed.
    Duplicate,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RespondError {
    #[error("no task {0}")]
    UnknownTask(u64),
    #[error("task {0} is no longer open")]
    Stale(u64),
    #[error("invalid response: {0}")]
    Invalid(String),
}

#[derive(Debug)]
enum Status {
    Queued,
    Assigned,
    Done(TaskResponse),
    Expired,
}

#[derive(Default)]
struct QueueState {
    next_id: u64,
    queue: VecDeque<u64>,
    tasks: HashMap<u64, (Task, Status)>,
    ledger_total: f64,
}

/// Hand-off point between the engine and a person: tasks are handed out at
/// most once and responses are idempotent per task id.
#[derive(Default)]
pub struct TaskQueue {
    state: Mutex<QueueState>,
    cv: Condvar,
}

fn check_score(v: &Value) -> bool {
    v.as_f64().is_some_and(|x| (0.0..=100.0).contains(&x))
}

fn check_text(v: &Value) -> bool {
    v.as_str().is_some_and(|s| !s.trim().is_empty())
}

fn validate(task: &Task, resp: &TaskResponse) -> std::result::Result<(), RespondError> {
    if resp.kind != task.kind.response_kind() {
        return Err(RespondError::Invalid(format!(
            "{:?} task needs a {:?} response",
            task.kind,
            task.kind.response_kind()
        )));
    }
    let ok = match task.kind {
        TaskKind::Answer => check_text(&resp.payload),
        TaskKind::Score => match &resp.payload {
            Value::Array(xs) => xs.len() == task.candidates.len() && xs.iter().all(check_score),
            v => task.candidates.len() == 1 && check_score(v),
        },
        TaskKind::Write => match &resp.payload {
            Value::Array(xs) => xs.len() == task.count && xs.iter().all(check_text),
            v => task.count == 1 && check_text(v),
        },
    };
    if ok {
        Ok(())
    } else {
        Err(RespondError::Invalid(format!(
            "malformed payload for {:?} task",
            task.kind
        )))
    }
}

impl TaskQueue {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    /// Enqueues a task; its id is assigned here.
    pub fn post(&self, mut task: Task) -> u64 {
        let mut st = self.state.lock().unwrap();
        let id = st.next_id;
        st.next_id += 1;
        task.id = id;
        task.ledger_total = st.ledger_total;
        st.queue.push_back(id);
        st.tasks.insert(id, (task, Status::Queued));
        id
    }

    /// Hands out the oldest queued task, which is never handed out again.
    pub fn next(&self) -> Option<Task> {
        let mut st = self.state.lock().unwrap();
        while let Some(id) = st.queue.pop_front() {
            if let Some((task, status)) = st.tasks.get_mut(&id) {
                if matches!(status, Status::Queued) {
                    *status = Status::Assigned;
                    return Some(task.clone());
                }
            }
        }
        None
    }

    pub fn respond(
        &self,
        id: u64,
        resp: TaskResponse,
    ) -> std::result::Result<RespondOutcome, RespondError> {
        let mut st = self.state.lock().unwrap();
        let (task, status) = st.tasks.get_mut(&id).ok_or(RespondError::UnknownTask(id))?;
        match status {
            Status::Done(_) => return Ok(RespondOutcome::Duplicate),
            Status::Expired => return Err(RespondError::Stale(id)),
            Status::Queued | Status::Assigned => {}
        }
        validate(task, &resp)?;
        *status = Status::Done(resp);
        self.cv.notify_all();
        Ok(RespondOutcome::Accepted)
    }

    /// Blocks until task `id` has a response or `timeout` elapses; a timed-out
    /// task is closed and later responses are refused.
    pub fn wait(&self, id: u64, timeout: Duration) -> Option<TaskResponse> {
        let deadline = Instant::now() + timeout;
        let mut st = self.state.lock().unwrap();
        loop {
            match st.tasks.get(&id) {
                Some((_, Status::Done(r))) => return Some(r.clone()),
                Some((_, Status::Expired)) | None => return None,
                _ => {}
            }
            let now = Instant::now();
            if now >= deadline {
                if let Some((_, s)) = st.tasks.get_mut(&id) {
                    *s = Status::Expired;
                }
                return None;
            }
            st = self.cv.wait_timeout(st, deadline - now).unwrap().0;
        }
    }

    pub fn set_ledger_total(&self, total: f64) {
        self.state.lock().unwrap().ledger_total = total;
    }

    pub fn ledger_total(&self) -> f64 {
        self.state.lock().unwrap().ledger_total
    }

    pub fn pending(&self) -> usize {
        let st = self.state.lock().unwrap();
        st.tasks
            .values()
            .filter(|(_, s)| matches!(s, Status::Queued | Status::Assigned))
            .count()
    }
}

/// Teacher that routes every interaction to a person through a [`TaskQueue`].
/// Human scores on a 0 to 100 scale are mapped linearly onto the Mix range.
pub struct HumanTeacher<'a> {
    queue: Arc<TaskQueue>,
    vocab: &'a Vocabulary,
    timeout: Duration,
    reward_scale: f64,
    answers: HashMap<(SceneId, String), WordId>,
    scores: HashMap<(SceneId, Vec<WordId>), f64>,
}

impl<'a> HumanTeacher<'a> {
    pub fn new(
        queue: Arc<TaskQueue>,
        vocab: &'a Vocabulary,
        weights: &MixWeights,
        timeout: Duration,
    ) -> Self {
        HumanTeacher {
            queue,
            vocab,
            timeout,
            reward_scale: weights.max_score(),
            answers: HashMap::new(),
            scores: HashMap::new(),
        }
    }

    fn ask(&self, task: Task, ledger: &SupervisionLedger) -> Result<TaskResponse> {
        self.queue.set_ledger_total(ledger.total());
        let scene = task.scene.id;
        let id = self.queue.post(task);
        self.queue
            .wait(id, self.timeout)
            .ok_or(Error::TeacherTimeout(scene))
    }

    fn task(&self, kind: TaskKind, scene: &Scene) -> Task {
        Task {
            id: 0,
            kind,
            scene: SceneView::new(scene, self.vocab),
            question: None,
            candidates: Vec::new(),
            count: 0,
            ledger_total: 0.0,
        }
    }

    fn words(&self, text: &str) -> Vec<WordId> {
        let mut t = self.vocab.encode(text);
        t.truncate(MAX_CAPTION_LEN);
        t
    }
}

impl Teacher for HumanTeacher<'_> {
    fn answer(
        &mut self,
        q: &Question,
        scene: &Scene,
        ledger: &mut SupervisionLedger,
        _rng: &mut Rng,
    ) -> Result<WordId> {
        let key = (scene.id, q.render());
        if let Some(&a) = self.answers.get(&key) {
            return Ok(a);
        }
        let mut task = self.task(TaskKind::Answer, scene);
        task.question = Some(QuestionView {
            qtype: q.qtype,
            text: q.render(),
            target_step: q.target_step,
            target_pos: q.target_pos,
        });
        let resp = self.ask(task, ledger)?;
        let text = resp.payload.as_str().unwrap_or_default();
        let word = text
            .split_whitespace()
            .next()
            .and_then(|w| self.vocab.id(w))
            .unwrap_or(UNK);
        ledger.charge_answer(scene.id, &key.1);
        self.answers.insert(key, word);
        Ok(word)
    }

    fn score(
        &mut self,
        scene: &Scene,
        candidates: &[&[WordId]],
        ledger: &mut SupervisionLedger,
    ) -> Result<Vec<f64>> {
        let cached: Option<Vec<f64>> = candidates
            .iter()
            .map(|c| self.scores.get(&(scene.id, c.to_vec())).copied())
            .collect();
        if let Some(s) = cached {
            return Ok(s);
        }
        let mut task = self.task(TaskKind::Score, scene);
        task.candidates = candidates.iter().map(|c| self.vocab.render(c)).collect();
        let resp = self.ask(task, ledger)?;
        let raw: Vec<f64> = match &resp.payload {
            Value::Array(xs) => xs.iter().filter_map(Value::as_f64).collect(),
            v => v.as_f64().into_iter().collect(),
        };
        let rewards: Vec<f64> = raw.iter().map(|s| s / 100.0 * self.reward_scale).collect();
        ledger.charge_scoring(scene.id, candidates);
        for (c, r) in candidates.iter().zip(&rewards) {
            self.scores.insert((scene.id, c.to_vec()), *r);
        }
        Ok(rewards)
    }

    fn write_caption(
        &mut self,
        scene: &Scene,
        m: usize,
        ledger: &mut SupervisionLedger,
        _rng: &mut Rng,
    ) -> Result<Vec<Caption>> {
        let mut task = self.task(TaskKind::Write, scene);
        task.count = m;
        let resp = self.ask(task, ledger)?;
        let texts: Vec<String> = match &resp.payload {
            Value::Array(xs) => xs
                .iter()
                .filter_map(|x| x.as_str().map(str::to_string))
                .collect(),
            v => v.as_str().map(str::to_string).into_iter().collect(),
        };
        let caps: Vec<Caption> = texts
            .iter()
            .map(|t| Caption::tagged(self.words(t), self.vocab, CaptionSource::Gt))
            .collect();
        ledger.charge_written(caps.len());
        Ok(caps)
    }
}
