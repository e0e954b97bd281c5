//! Agent living in a child process, spoken to over stdin/stdout with
//! length-prefixed JSON frames.

use std::io::{BufReader, BufWriter, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use skynav::protocol::{read_frame, write_frame, Agent, AgentContext, AgentMessage, ProtocolError, SimMessage};

pub struct RemoteAgent {
    child: Child,
    stdin: BufWriter<ChildStdin>,
    stdout: BufReader<ChildStdout>,
    /// Messages forwarded during the current episode.
    delivered: usize,
}

impl RemoteAgent {
    /// Runs `cmd` through the shell.
    pub fn spawn(cmd: &str) -> Result<Self, ProtocolError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(cmd)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()?;
        let stdin = BufWriter::new(child.stdin.take().expect("piped stdin"));
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(Self {
            child,
            stdin,
            stdout,
            delivered: 0,
        })
    }

    fn send(&mut self, batch: &[SimMessage]) -> Result<(), ProtocolError> {
        write_frame(&mut self.stdin, &batch)?;
        self.stdin.flush()?;
        Ok(())
    }

    /// Forwards whatever the episode produced after the agent's last turn
    /// (the closing `EpisodeEnd` batch).
    pub fn finish_episode(&mut self, all: &[SimMessage]) -> Result<(), ProtocolError> {
        let tail = all.get(self.delivered..).unwrap_or_default();
        self.delivered = 0;
        self.send(tail)
    }

    /// Closes the pipe and waits for the process.
    pub fn close(mut self) -> Result<(), ProtocolError> {
        drop(self.stdin);
        self.child.wait()?;
        Ok(())
    }
}

impl Agent for RemoteAgent {
    fn act(&mut self, ctx: &AgentContext<'_>) -> Result<Option<AgentMessage>, ProtocolError> {
        self.delivered += ctx.last.len();
        self.send(ctx.last)?;
        read_frame(&mut self.stdout)
    }
}
