//! Community statistics snapshots from a code-hosting API (stars, forks) and
//! a dataset hub API (likes, downloads).
//!
//! Fetching is separate from scoring: the output is a snapshot file that
//! audits read offline. A platform that cannot be read is recorded as absent,
//! never as zero. Only authentication failures abort the run.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use bhi_core::impact::{CommunitySnapshot, SnapshotFile};
use bhi_core::ingest::{BenchmarkMeta, BenchmarkRegistry};
use chrono::NaiveDate;
use serde::Deserialize;
use thiserror::Error;
use tracing::{debug, warn};

pub const GITHUB_TOKEN_ENV: &str = "BHI_GITHUB_TOKEN";
pub const HF_TOKEN_ENV: &str = "BHI_HF_TOKEN";
pub const DEFAULT_GITHUB_API: &str = "https://api.github.com";
pub const DEFAULT_HF_API: &str = "https://huggingface.co";
pub const DEFAULT_CONCURRENCY: usize = 4;
/// The hub's dataset endpoint reports a trailing 30-day download count.
pub const HF_DOWNLOADS_WINDOW: &str = "last_30_days";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Platform {
    GitHub,
    HuggingFace,
}

impl std::fmt::Display for Platform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Platform::GitHub => "github",
            Platform::HuggingFace => "huggingface",
        })
    }
}

#[derive(Debug, Error)]
pub enum FetchError {
    #[error("{platform}: authentication failed (HTTP {status}); check {env}")]
    Auth {
        platform: Platform,
        status: u16,
        env: &'static str,
    },
    #[error("invalid fetch configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone)]
pub struct FetchConfig {
    pub github_api: String,
    pub hf_api: String,
    pub github_token: Option<String>,
    pub hf_token: Option<String>,
    pub timeout: Duration,
    pub concurrency: usize,
    pub max_retries: u32,
    /// First retry delay; doubles per attempt unless the server says otherwise.
    pub backoff: Duration,
    pub max_backoff: Duration,
    pub fetched_at: NaiveDate,
}

impl FetchConfig {
    pub fn new(fetched_at: NaiveDate) -> Self {
        Self {
            github_api: DEFAULT_GITHUB_API.into(),
            hf_api: DEFAULT_HF_API.into(),
            github_token: None,
            hf_token: None,
            timeout: Duration::from_secs(20),
            concurrency: DEFAULT_CONCURRENCY,
            max_retries: 4,
            backoff: Duration::from_millis(500),
            max_backoff: Duration::from_secs(60),
            fetched_at,
        }
    }

    /// Tokens come from the environment only.
    pub fn with_env_tokens(mut self) -> Self {
        let read = |k| std::env::var(k).ok().filter(|v: &String| !v.trim().is_empty());
        self.github_token = read(GITHUB_TOKEN_ENV);
        self.hf_token = read(HF_TOKEN_ENV);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FetchOutcome {
    pub snapshot: SnapshotFile,
    pub warnings: Vec<String>,
}

#[derive(Deserialize)]
struct RepoBody {
    stargazers_count: u64,
    forks_count: u64,
}

#[derive(Deserialize)]
struct DatasetBody {
    #[serde(default)]
    likes: u64,
    #[serde(default)]
    downloads: u64,
}

enum Lookup<T> {
    Found(T),
    /// Non-fatal miss with a human reason.
    Absent(String),
}

struct Client {
    agent: ureq::Agent,
    cfg: FetchConfig,
}

fn retry_after(resp: &ureq::http::Response<ureq::Body>) -> Option<Duration> {
    let v = resp.headers().get("retry-after")?.to_str().ok()?;
    v.trim().parse::<u64>().ok().map(Duration::from_secs)
}

fn is_rate_limited(resp: &ureq::http::Response<ureq::Body>) -> bool {
    let status = resp.status().as_u16();
    if status == 429 {
        return true;
    }
    status == 403
        && resp
            .headers()
            .get("x-ratelimit-remaining")
            .and_then(|v| v.to_str().ok())
            .is_some_and(|v| v.trim() == "0")
}

impl Client {
    fn new(cfg: FetchConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(cfg.timeout))
            .user_agent(concat!("bhi-fetch/", env!("CARGO_PKG_VERSION")))
            .build()
            .new_agent();
        Self { agent, cfg }
    }

    fn get_json<T: for<'de> Deserialize<'de>>(&self, platform: Platform, url: &str) -> Result<Lookup<T>, FetchError> {
        let (token, env) = match platform {
            Platform::GitHub => (&self.cfg.github_token, GITHUB_TOKEN_ENV),
            Platform::HuggingFace => (&self.cfg.hf_token, HF_TOKEN_ENV),
        };
        let mut delay = self.cfg.backoff;
        for attempt in 0..=self.cfg.max_retries {
            let mut req = self.agent.get(url).header("Accept", "application/json");
            if let Some(t) = token {
                req = req.header("Authorization", &format!("Bearer {t}"));
            }
            let resp = match req.call() {
                Ok(r) => r,
                Err(e) => {
                    debug!(%url, attempt, error = %e, "transport error");
                    if attempt == self.cfg.max_retries {
                        return Ok(Lookup::Absent(format!("{platform}: request failed: {e}")));
                    }
                    thread::sleep(delay);
                    delay = (delay * 2).min(self.cfg.max_backoff);
                    continue;
                }
            };
            let status = resp.status().as_u16();
            if is_rate_limited(&resp) || (500..600).contains(&status) {
                if attempt == self.cfg.max_retries {
                    return Ok(Lookup::Absent(format!("{platform}: gave up after HTTP {status}")));
                }
                let wait = retry_after(&resp).unwrap_or(delay).min(self.cfg.max_backoff);
                debug!(%url, status, ?wait, "backing off");
                thread::sleep(wait);
                delay = (delay * 2).min(self.cfg.max_backoff);
                continue;
            }
            return match status {
                200..=299 => match resp.into_body().read_json::<T>() {
                    Ok(body) => Ok(Lookup::Found(body)),
                    Err(e) => Ok(Lookup::Absent(format!("{platform}: unreadable response: {e}"))),
                },
                401 | 403 => Err(FetchError::Auth { platform, status, env }),
                404 => Ok(Lookup::Absent(format!("{platform}: not found"))),
                other => Ok(Lookup::Absent(format!("{platform}: HTTP {other}"))),
            };
        }
        unreachable!("loop returns on the last attempt")
    }

    fn snapshot(&self, meta: &BenchmarkMeta) -> SnapshotResult {
        let mut snap = CommunitySnapshot::empty(&meta.id, self.cfg.fetched_at);
        let mut warnings = Vec::new();
        let mut miss = |snap: &mut CommunitySnapshot, reason: String| {
            snap.partial = true;
            warnings.push(format!("benchmark `{}`: {reason}", meta.id));
            snap.notes.push(reason);
        };
        if let Some(repo) = &meta.github_repo {
            let url = format!("{}/repos/{}", self.cfg.github_api.trim_end_matches('/'), repo.trim_matches('/'));
            match self.get_json::<RepoBody>(Platform::GitHub, &url)? {
                Lookup::Found(b) => {
                    snap.gh_stars = Some(b.stargazers_count);
                    snap.gh_forks = Some(b.forks_count);
                }
                Lookup::Absent(reason) => miss(&mut snap, format!("{reason} ({repo})")),
            }
        }
        if let Some(ds) = &meta.hf_dataset {
            let url = format!("{}/api/datasets/{}", self.cfg.hf_api.trim_end_matches('/'), ds.trim_matches('/'));
            match self.get_json::<DatasetBody>(Platform::HuggingFace, &url)? {
                Lookup::Found(b) => {
                    snap.hf_likes = Some(b.likes);
                    snap.hf_downloads = Some(b.downloads);
                    snap.hf_downloads_window = Some(HF_DOWNLOADS_WINDOW.into());
                }
                Lookup::Absent(reason) => miss(&mut snap, format!("{reason} ({ds})")),
            }
        }
        Ok((snap, warnings))
    }
}

type SnapshotResult = Result<(CommunitySnapshot, Vec<String>), FetchError>;

/// One snapshot per registry entry, in benchmark-id order.
pub fn fetch_community(benchmarks: &BenchmarkRegistry, cfg: FetchConfig) -> Result<FetchOutcome, FetchError> {
    if cfg.concurrency == 0 {
        return Err(FetchError::Config("concurrency must be at least 1".into()));
    }
    let fetched_at = cfg.fetched_at;
    let workers = cfg.concurrency.min(benchmarks.len().max(1));
    let client = Client::new(cfg);
    let metas: Vec<&BenchmarkMeta> = benchmarks.values().collect();
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<SnapshotResult>>> =
        metas.iter().map(|_| Mutex::new(None)).collect();

    thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(meta) = metas.get(i) else { break };
                let r = client.snapshot(meta);
                *slots[i].lock().expect("slot lock") = Some(r);
            });
        }
    });

    let mut snapshots = Vec::with_capacity(metas.len());
    let mut warnings = Vec::new();
    for slot in slots {
        let (snap, w) = slot.into_inner().expect("slot lock").expect("every index is visited")?;
        snapshots.push(snap);
        warnings.extend(w);
    }
    for w in &warnings {
        warn!("{w}");
    }
    Ok(FetchOutcome {
        snapshot: SnapshotFile { fetched_at, snapshots },
        warnings,
    })
}

pub fn snapshot_json(snapshot: &SnapshotFile) -> String {
    serde_json::to_string_pretty(snapshot).expect("snapshot is serializable") + "\n"
}
