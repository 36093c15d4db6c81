use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use super::{render_prompt, PromptProtocol, PromptTemplate, ProtocolError, WireAnswer, WireQuery, WIRE_VERSION};
use crate::game::GameSpec;
use crate::preferences::{ExternalOracle, PreferenceAnswer, PreferenceQuery, QueryKey};

pub const DEFAULT_TIMEOUT_MS: u64 = 30_000;

/// Carries one query to an endpoint and returns its reply.
pub trait Transport {
    fn exchange(&mut self, q: &WireQuery, timeout: Duration) -> Result<WireAnswer, ProtocolError>;
}

fn check_reply(q: &WireQuery, a: WireAnswer) -> Result<WireAnswer, ProtocolError> {
    if a.query_id != q.query_id {
        return Err(ProtocolError::IdMismatch { expected: q.query_id, got: a.query_id });
    }
    Ok(a)
}

/// A child process speaking line-delimited JSON on stdin and stdout.
///
/// One query is in flight at a time. After a timeout the endpoint refuses
/// further queries, since a late reply would pair with the wrong query.
pub struct StdioEndpoint {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    poisoned: bool,
}

impl StdioEndpoint {
    pub fn spawn(argv: &[String]) -> Result<Self, ProtocolError> {
        let (program, args) =
            argv.split_first().ok_or_else(|| ProtocolError::Transport("empty oracle command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| ProtocolError::Transport(format!("cannot start {program}: {e}")))?;
        let stdin = child.stdin.take().expect("stdin was piped");
        let stdout = child.stdout.take().expect("stdout was piped");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(StdioEndpoint { child, stdin, lines: rx, poisoned: false })
    }
}

impl Transport for StdioEndpoint {
    fn exchange(&mut self, q: &WireQuery, timeout: Duration) -> Result<WireAnswer, ProtocolError> {
        if self.poisoned {
            return Err(ProtocolError::Transport("endpoint abandoned after an earlier timeout".into()));
        }
        let mut line = serde_json::to_string(q).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
        line.push('\n');
        self.stdin
            .write_all(line.as_bytes())
            .and_then(|_| self.stdin.flush())
            .map_err(|_| ProtocolError::Closed)?;
        let reply = match self.lines.recv_timeout(timeout) {
            Ok(Ok(reply)) => reply,
            Ok(Err(e)) => return Err(ProtocolError::Transport(e.to_string())),
            Err(RecvTimeoutError::Timeout) => {
                self.poisoned = true;
                return Err(ProtocolError::Timeout(timeout.as_millis() as u64));
            }
            Err(RecvTimeoutError::Disconnected) => return Err(ProtocolError::Closed),
        };
        let answer: WireAnswer =
            serde_json::from_str(&reply).map_err(|e| ProtocolError::Malformed(format!("{e}: {reply:?}")))?;
        check_reply(q, answer)
    }
}

impl Drop for StdioEndpoint {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// An HTTP endpoint receiving each query as a JSON POST body.
pub struct HttpEndpoint {
    url: String,
}

impl HttpEndpoint {
    pub fn new(url: impl Into<String>) -> Self {
        HttpEndpoint { url: url.into() }
    }
}

impl Transport for HttpEndpoint {
    fn exchange(&mut self, q: &WireQuery, timeout: Duration) -> Result<WireAnswer, ProtocolError> {
        let agent: ureq::Agent = ureq::Agent::config_builder().timeout_global(Some(timeout)).build().into();
        let mut response = agent.post(&self.url).send_json(q).map_err(|e| match e {
            ureq::Error::Timeout(_) => ProtocolError::Timeout(timeout.as_millis() as u64),
            other => ProtocolError::Transport(other.to_string()),
        })?;
        let answer: WireAnswer = response.body_mut().read_json().map_err(|e| match e {
            ureq::Error::Timeout(_) => ProtocolError::Timeout(timeout.as_millis() as u64),
            other => ProtocolError::Malformed(other.to_string()),
        })?;
        check_reply(q, answer)
    }
}

/// Adapts a transport into an [`ExternalOracle`] by rendering prompts.
pub struct ExternalPlugin<T: Transport> {
    transport: T,
    template: PromptTemplate,
    task_dims: Vec<String>,
    timeout: Duration,
    next_id: u64,
}

impl<T: Transport> ExternalPlugin<T> {
    pub fn new(transport: T) -> Self {
        ExternalPlugin {
            transport,
            template: PromptTemplate::builtin(PromptProtocol::Coalt),
            task_dims: super::DEFAULT_TASK_DIMS.iter().map(|s| s.to_string()).collect(),
            timeout: Duration::from_millis(DEFAULT_TIMEOUT_MS),
            next_id: 0,
        }
    }

    pub fn with_template(mut self, template: PromptTemplate) -> Self {
        self.template = template;
        self
    }

    pub fn with_task_dims(mut self, dims: Vec<String>) -> Self {
        self.task_dims = dims;
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn queries_sent(&self) -> u64 {
        self.next_id
    }

    pub fn transport_mut(&mut self) -> &mut T {
        &mut self.transport
    }
}

impl<T: Transport> ExternalOracle for ExternalPlugin<T> {
    fn ask(
        &mut self,
        game: &GameSpec,
        q: &PreferenceQuery,
        _key: &QueryKey,
        _attempt: u32,
    ) -> Result<PreferenceAnswer, ProtocolError> {
        let dims: Vec<&str> = self.task_dims.iter().map(String::as_str).collect();
        let prompt = render_prompt(&self.template, game, q, &dims)?;
        let wire = WireQuery {
            v: WIRE_VERSION,
            query_id: self.next_id,
            prompt,
            agent: q.agent,
            current: q.current.to_vec(),
            candidate: q.candidate.to_vec(),
        };
        self.next_id += 1;
        self.transport.exchange(&wire, self.timeout)?.to_preference()
    }
}
