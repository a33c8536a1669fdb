use std::io::{self, Read};
use std::os::unix::process::CommandExt;
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use crate::error::{Error, Result};

pub const OUTPUT_CAP: usize = 4096;

pub(crate) struct Finished {
    pub exit_code: Option<i32>,
    pub timed_out: bool,
    pub duration_ms: f64,
    pub output: Vec<u8>,
}

fn drain(mut src: impl Read + Send + 'static, sink: Arc<Mutex<Vec<u8>>>) -> JoinHandle<()> {
    thread::spawn(move || {
        let mut buf = [0u8; 4096];
        loop {
            match src.read(&mut buf) {
                Ok(0) | Err(_) => break,
                Ok(n) => {
                    let mut out = sink.lock().unwrap_or_else(|e| e.into_inner());
                    let room = OUTPUT_CAP.saturating_sub(out.len());
                    out.extend_from_slice(&buf[..n.min(room)]);
                }
            }
        }
    })
}

fn kill_group(child: &Child) {
    let pid = child.id() as libc::pid_t;
    unsafe {
        libc::kill(-pid, libc::SIGKILL);
    }
}

/// Polls for exit without reaping.
fn exited_unreaped(child: &Child) -> io::Result<bool> {
    let mut info: libc::siginfo_t = unsafe { std::mem::zeroed() };
    let rc = unsafe {
        libc::waitid(
            libc::P_PID,
            child.id() as libc::id_t,
            &mut info,
            libc::WEXITED | libc::WNOHANG | libc::WNOWAIT,
        )
    };
    if rc != 0 {
        return Err(io::Error::last_os_error());
    }
    Ok(unsafe { info.si_pid() } != 0)
}

/// Runs `argv` in `workdir` with a wall-clock limit. Stdout and stderr are
/// interleaved into one capped buffer.
pub(crate) fn run_with_timeout(argv: &[String], workdir: &Path, timeout: Duration) -> Result<Finished> {
    let (program, args) = argv
        .split_first()
        .ok_or_else(|| Error::InvalidStageConfig("empty command".into()))?;
    let started = Instant::now();
    let mut child = Command::new(program)
        .args(args)
        .current_dir(workdir)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .process_group(0)
        .spawn()
        .map_err(|source| Error::CommandSpawn {
            command: argv.join(" "),
            source,
        })?;
    let sink = Arc::new(Mutex::new(Vec::new()));
    let readers = [
        drain(child.stdout.take().expect("piped"), Arc::clone(&sink)),
        drain(child.stderr.take().expect("piped"), Arc::clone(&sink)),
    ];
    let deadline = started + timeout;
    let mut timed_out = false;
    loop {
        match exited_unreaped(&child) {
            Ok(true) => break,
            Ok(false) if Instant::now() >= deadline => {
                timed_out = true;
                break;
            }
            Ok(false) => thread::sleep(Duration::from_millis(5)),
            Err(source) => {
                kill_group(&child);
                let _ = child.wait();
                return Err(Error::CommandSpawn {
                    command: argv.join(" "),
                    source,
                });
            }
        }
    }
    // The leader is not reaped yet, so the group id still names only our
    // processes. Killing it also ends descendants holding the pipes open.
    kill_group(&child);
    let status = child.wait().map_err(|source| Error::CommandSpawn {
        command: argv.join(" "),
        source,
    })?;
    for r in readers {
        let _ = r.join();
    }
    let duration_ms = started.elapsed().as_secs_f64() * 1e3;
    let output = std::mem::take(&mut *sink.lock().unwrap_or_else(|e| e.into_inner()));
    Ok(Finished {
        exit_code: if timed_out { None } else { status.code() },
        timed_out,
        duration_ms,
        output,
    })
}
