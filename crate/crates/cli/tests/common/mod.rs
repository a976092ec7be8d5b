#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use std::io::Write as _;

pub const BIN: &str = env!("CARGO_BIN_EXE_cane");

/// A scratch directory holding a fixed-clock workspace.
pub struct Ws {
    pub dir: tempfile::TempDir,
    seq: u32,
}

/// What one invocation produced.
#[derive(Debug, PartialEq, Eq)]
pub struct Run {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Run {
    fn from(o: Output) -> Self {
        Run {
            code: o.status.code().unwrap_or(-1),
            stdout: String::from_utf8_lossy(&o.stdout).into_owned(),
            stderr: String::from_utf8_lossy(&o.stderr).into_owned(),
        }
    }

    /// Value of the first `key=` line on stdout.
    pub fn get(&self, key: &str) -> Option<&str> {
        self.stdout.lines().find_map(|l| l.strip_prefix(key)?.strip_prefix('='))
    }

    pub fn all(&self, key: &str) -> Vec<&str> {
        self.stdout.lines().filter_map(|l| l.strip_prefix(key)?.strip_prefix('=')).collect()
    }

    pub fn num(&self, key: &str) -> u64 {
        self.get(key)
            .unwrap_or_else(|| panic!("no {key}= in {:?}", self.stdout))
            .parse()
            .unwrap()
    }

    pub fn ok(self) -> Self {
        assert_eq!(self.code, 0, "stderr: {}", self.stderr);
        self
    }

    pub fn line(&self) -> &str {
        self.stdout.trim_end()
    }
}

impl Ws {
    /// Empty directory, no workspace yet.
    pub fn bare() -> Self {
        Ws {
            dir: tempfile::tempdir().unwrap(),
            seq: 0,
        }
    }

    /// Initialized fixed-clock workspace.
    pub fn new() -> Self {
        let w = Self::bare();
        w.run(&["init", "--clock", "fixed"]).ok();
        w
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    pub fn write(&self, rel: &str, bytes: &[u8]) -> PathBuf {
        let p = self.path(rel);
        std::fs::write(&p, bytes).unwrap();
        p
    }

    fn cmd(&self, args: &[&str]) -> Command {
        let mut c = Command::new(BIN);
        c.args(args).current_dir(self.dir.path()).env_remove("CANE_WS");
        c
    }

    pub fn run(&self, args: &[&str]) -> Run {
        Run::from(self.cmd(args).output().unwrap())
    }

    pub fn run_stdin(&self, args: &[&str], input: &[u8]) -> Run {
        let mut child = self
            .cmd(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .unwrap();
        child.stdin.take().unwrap().write_all(input).unwrap();
        Run::from(child.wait_with_output().unwrap())
    }

    /// A fresh stamp, later than every one handed out before.
    pub fn stamp(&mut self) -> String {
        self.seq += 1;
        format!("2005-07-14T14:23:{:02}.{:06}Z.1", 17 + self.seq / 1_000_000, self.seq % 1_000_000)
    }

    /// The most recent stamp handed out.
    pub fn last_stamp(&self) -> String {
        format!("2005-07-14T14:23:{:02}.{:06}Z.1", 17 + self.seq / 1_000_000, self.seq % 1_000_000)
    }

    /// Runs a mutating command with the next stamp.
    pub fn mutate(&mut self, args: &[&str]) -> Run {
        let st = self.stamp();
        let mut full = vec!["--porcelain", "--stamp", st.as_str()];
        full.extend_from_slice(args);
        self.run(&full)
    }

    pub fn put(&mut self, path: &str, bytes: &[u8]) -> String {
        let st = self.stamp();
        let r = self.run_stdin(&["--porcelain", "--stamp", &st, "put", "-", path], bytes).ok();
        r.get("root").unwrap().to_string()
    }

    pub fn stats(&self) -> Run {
        self.run(&["stats"]).ok()
    }

    pub fn store_dir(&self) -> PathBuf {
        self.path("cane.store")
    }
}

pub fn block_file(store: &Path, hex: &str) -> PathBuf {
    store.join("blocks").join(&hex[..2]).join(hex)
}
