//! Asynchronous sweep jobs on a bounded worker pool.
//!
//! Sweep renders run inside a dedicated rayon pool, so preview renders on
//! the global pool never queue behind them.

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{mpsc, Arc, Mutex, MutexGuard};
use std::thread;

use grass_sim::config::validate_lengths;
use grass_sim::scene::Viewpoint;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::runner::{run_sweep, sweep_key, Scene, SweepSpec};
use crate::workspace::Workspace;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
    Cancelled,
}

impl JobState {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobState::Done | JobState::Failed | JobState::Cancelled)
    }

    fn rank(self) -> u8 {
        match self {
            JobState::Queued => 0,
            JobState::Running => 1,
            _ => 2,
        }
    }

    /// Allowed transitions: forward only, and nothing leaves a terminal
    /// state. Running may repeat to report progress.
    pub fn can_become(self, next: JobState) -> bool {
        !self.is_terminal() && (next.rank() > self.rank() || (self == JobState::Running && next == JobState::Running))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JobStatus {
    pub id: String,
    pub scene: String,
    pub spec: SweepSpec,
    pub state: JobState,
    /// Fraction of lengths measured.
    pub progress: f64,
    pub cancel_requested: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curve_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl JobStatus {
    fn advance(&mut self, next: JobState) {
        assert!(self.state.can_become(next), "job {}: {:?} -> {next:?}", self.id, self.state);
        self.state = next;
    }
}

struct Job {
    status: JobStatus,
    key: String,
    scene: Scene,
    cancel: Arc<AtomicBool>,
}

struct Shared {
    jobs: Mutex<HashMap<String, Job>>,
    workspace: Arc<Workspace>,
    pool: rayon::ThreadPool,
}

impl Shared {
    fn jobs(&self) -> MutexGuard<'_, HashMap<String, Job>> {
        self.jobs.lock().unwrap_or_else(|e| e.into_inner())
    }
}

pub struct JobQueue {
    shared: Arc<Shared>,
    tx: mpsc::Sender<String>,
    next: AtomicU64,
}

impl JobQueue {
    /// `workers` sweeps run at once; their renders share a rayon pool of
    /// `render_threads`.
    pub fn new(workspace: Arc<Workspace>, workers: usize, render_threads: usize) -> Result<Self> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(render_threads.max(1))
            .thread_name(|i| format!("sweep-render-{i}"))
            .build()
            .map_err(|e| Error::Invalid(format!("render pool: {e}")))?;
        let shared = Arc::new(Shared {
            jobs: Mutex::new(HashMap::new()),
            workspace,
            pool,
        });
        let (tx, rx) = mpsc::channel::<String>();
        let rx = Arc::new(Mutex::new(rx));
        for i in 0..workers.max(1) {
            let (shared, rx) = (shared.clone(), rx.clone());
            thread::Builder::new()
                .name(format!("sweep-worker-{i}"))
                .spawn(move || loop {
                    let next = rx.lock().unwrap_or_else(|e| e.into_inner()).recv();
                    match next {
                        Ok(id) => run_job(&shared, &id),
                        Err(_) => break,
                    }
                })
                .map_err(|e| Error::io("<worker thread>", e))?;
        }
        Ok(JobQueue {
            shared,
            tx,
            next: AtomicU64::new(1),
        })
    }

    /// Sized to the machine: one worker and one render thread per CPU.
    pub fn with_cpu_count(workspace: Arc<Workspace>) -> Result<Self> {
        let n = thread::available_parallelism().map_or(1, |n| n.get());
        Self::new(workspace, n, n)
    }

    /// Validates and enqueues a sweep. A sweep whose curve is already in
    /// the workspace finishes immediately.
    pub fn submit(&self, scene: Scene, spec: SweepSpec) -> Result<JobStatus> {
        let v = spec.viewpoint;
        Viewpoint::new(v.h, v.d, v.theta)?;
        validate_lengths(&scene.config.grass.params()?, &spec.lengths)?;
        let key = sweep_key(&scene, &spec)?;
        let id = self.next.fetch_add(1, Ordering::Relaxed).to_string();
        let mut status = JobStatus {
            id: id.clone(),
            scene: scene.config.name.clone(),
            spec,
            state: JobState::Queued,
            progress: 0.0,
            cancel_requested: false,
            curve_id: None,
            error: None,
        };
        let cached = self.shared.workspace.has_curve(&key);
        if cached {
            status.advance(JobState::Done);
            status.progress = 1.0;
            status.curve_id = Some(key.clone());
        }
        let job = Job {
            status: status.clone(),
            key,
            scene,
            cancel: Arc::new(AtomicBool::new(false)),
        };
        self.shared.jobs().insert(id.clone(), job);
        if !cached {
            self.tx
                .send(id)
                .map_err(|_| Error::Conflict("job queue is shut down".into()))?;
        }
        Ok(status)
    }

    pub fn status(&self, id: &str) -> Result<JobStatus> {
        self.shared
            .jobs()
            .get(id)
            .map(|j| j.status.clone())
            .ok_or_else(|| Error::NotFound(format!("job {id:?}")))
    }

    pub fn list(&self) -> Vec<JobStatus> {
        let mut all: Vec<JobStatus> = self.shared.jobs().values().map(|j| j.status.clone()).collect();
        all.sort_by_key(|s| s.id.parse::<u64>().unwrap_or(u64::MAX));
        all
    }

    /// Queued jobs are cancelled at once; running jobs stop after the
    /// current length and keep what they measured.
    pub fn cancel(&self, id: &str) -> Result<JobStatus> {
        let mut jobs = self.shared.jobs();
        let job = jobs.get_mut(id).ok_or_else(|| Error::NotFound(format!("job {id:?}")))?;
        if job.status.state.is_terminal() {
            return Err(Error::Conflict(format!("job {id} is already {:?}", job.status.state).to_lowercase()));
        }
        job.cancel.store(true, Ordering::SeqCst);
        job.status.cancel_requested = true;
        if job.status.state == JobState::Queued {
            job.status.advance(JobState::Cancelled);
        }
        Ok(job.status.clone())
    }
}

fn run_job(shared: &Shared, id: &str) {
    let (scene, spec, key, cancel) = {
        let mut jobs = shared.jobs();
        let Some(job) = jobs.get_mut(id) else { return };
        if job.status.state != JobState::Queued {
            return;
        }
        job.status.advance(JobState::Running);
        (job.scene.clone(), job.status.spec.clone(), job.key.clone(), job.cancel.clone())
    };
    log::info!("job {id}: sweeping {} lengths of {}", spec.lengths.len(), scene.config.name);
    let progress = |done: usize, total: usize| {
        if let Some(job) = shared.jobs().get_mut(id) {
            if job.status.state == JobState::Running {
                job.status.progress = done as f64 / total as f64;
            }
        }
    };
    let result = shared
        .pool
        .install(|| run_sweep(&scene, &spec, Some(&cancel), Some(&progress)))
        .and_then(|out| {
            if out.cancelled {
                let partial = SweepSpec {
                    lengths: spec.lengths[..out.curve.len()].to_vec(),
                    ..spec.clone()
                };
                let pid = sweep_key(&scene, &partial)?;
                shared.workspace.put_curve(&pid, &out.curve)?;
                Ok((JobState::Cancelled, Some(pid)))
            } else {
                shared.workspace.put_curve(&key, &out.curve)?;
                Ok((JobState::Done, Some(key)))
            }
        });
    let mut jobs = shared.jobs();
    let Some(job) = jobs.get_mut(id) else { return };
    match result {
        Ok((state, curve_id)) => {
            if state == JobState::Done {
                job.status.progress = 1.0;
            }
            job.status.curve_id = curve_id;
            job.status.advance(state);
        }
        Err(Error::Sim(grass_sim::Error::Cancelled)) => job.status.advance(JobState::Cancelled),
        Err(e) => {
            log::warn!("job {id} failed: {e}");
            job.status.error = Some(e.to_string());
            job.status.advance(JobState::Failed);
        }
    }
    log::info!("job {id}: {:?}", job.status.state);
}
