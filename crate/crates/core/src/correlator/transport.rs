use std::fs;
use std::io;
use std::process::Command;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::time::Duration;

use parking_lot::Mutex;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandOutput {
    pub status: i32,
    pub stdout: String,
    pub stderr: String,
}

/// Runs a search command, locally or on a log server.
pub trait CommandRunner: Send + Sync {
    fn run(&self, endpoint: Option<&str>, argv: &[String]) -> io::Result<CommandOutput>;
}

fn output(o: std::process::Output) -> CommandOutput {
    CommandOutput {
        status: o.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&o.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&o.stderr).into_owned(),
    }
}

/// Executes the command directly, without a shell.
#[derive(Debug, Clone, Copy, Default)]
pub struct LocalRunner;

impl CommandRunner for LocalRunner {
    fn run(&self, _endpoint: Option<&str>, argv: &[String]) -> io::Result<CommandOutput> {
        let (program, args) = argv
            .split_first()
            .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "empty command"))?;
        Command::new(program).args(args).output().map(output)
    }
}

/// Runs the command on the endpoint through an ssh client. The remote
/// shell sees each argument quoted.
#[derive(Debug, Clone)]
pub struct SshRunner {
    pub program: String,
    pub options: Vec<String>,
}

impl Default for SshRunner {
    fn default() -> Self {
        Self {
            program: "ssh".into(),
            options: vec!["-o".into(), "BatchMode=yes".into()],
        }
    }
}

impl CommandRunner for SshRunner {
    fn run(&self, endpoint: Option<&str>, argv: &[String]) -> io::Result<CommandOutput> {
        let endpoint = endpoint.ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "no endpoint"))?;
        let remote = shlex::try_join(argv.iter().map(String::as_str))
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e.to_string()))?;
        Command::new(&self.program)
            .args(&self.options)
            .arg(endpoint)
            .arg("--")
            .arg(remote)
            .output()
            .map(output)
    }
}

/// In-process stand-in for a log server. It reads the named local files
/// and returns every line containing the address, like a plain grep. Every
/// invocation is recorded.
#[derive(Debug, Default)]
pub struct StubRunner {
    calls: Mutex<Vec<(Option<String>, Vec<String>)>>,
    failing: AtomicBool,
    delay: Mutex<Option<Duration>>,
    active: AtomicUsize,
    peak: AtomicUsize,
}

impl StubRunner {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn invocations(&self) -> usize {
        self.calls.lock().len()
    }

    pub fn calls(&self) -> Vec<(Option<String>, Vec<String>)> {
        self.calls.lock().clone()
    }

    /// Makes subsequent runs exit with status 1.
    pub fn set_failing(&self, failing: bool) {
        self.failing.store(failing, Ordering::SeqCst);
    }

    /// Makes each run take at least this long.
    pub fn set_delay(&self, delay: Option<Duration>) {
        *self.delay.lock() = delay;
    }

    /// Most runs observed in flight at once.
    pub fn peak_concurrency(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }
}

impl CommandRunner for StubRunner {
    fn run(&self, endpoint: Option<&str>, argv: &[String]) -> io::Result<CommandOutput> {
        self.calls.lock().push((endpoint.map(str::to_string), argv.to_vec()));
        let now = self.active.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        let delay = *self.delay.lock();
        if let Some(d) = delay {
            std::thread::sleep(d);
        }
        let result = self.search(argv);
        self.active.fetch_sub(1, Ordering::SeqCst);
        result
    }
}

impl StubRunner {
    fn search(&self, argv: &[String]) -> io::Result<CommandOutput> {
        if self.failing.load(Ordering::SeqCst) {
            return Ok(CommandOutput {
                status: 1,
                stdout: String::new(),
                stderr: "stub failure".into(),
            });
        }
        // program path... ip start end
        if argv.len() < 5 {
            return Ok(CommandOutput {
                status: 2,
                stdout: String::new(),
                stderr: format!("usage: {} PATH... IP START END", argv.first().map_or("flowgrep", |s| s)),
            });
        }
        let ip = &argv[argv.len() - 3];
        let mut stdout = String::new();
        for path in &argv[1..argv.len() - 3] {
            let Ok(text) = fs::read_to_string(path) else { continue };
            for line in text.lines().filter(|l| l.contains(ip.as_str())) {
                stdout.push_str(line);
                stdout.push('\n');
            }
        }
        Ok(CommandOutput {
            status: 0,
            stdout,
            stderr: String::new(),
        })
    }
}
