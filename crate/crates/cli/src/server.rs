//! WebSocket telemetry and command server.
//!
//! One client at a time. The simulation thread pushes frames into a bounded
//! queue; a connection thread drains the queue to the socket and forwards
//! incoming text messages to the command channel. A slow client loses the
//! oldest frames, never the newest. Frames produced while no client is
//! connected are discarded and not counted as drops.

use std::collections::VecDeque;
use std::io;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, SyncSender, TrySendError};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use kitesim_core::telemetry::Outbound;
use tungstenite::{Message, WebSocket};

/// Frames buffered for a slow client (3.2 s of telemetry).
pub const QUEUE_CAPACITY: usize = 64;
/// Commands buffered between two interval boundaries.
pub const COMMAND_CAPACITY: usize = 64;

const POLL: Duration = Duration::from_millis(10);

#[derive(Debug, Default)]
struct QueueState {
    frames: VecDeque<String>,
    connected: bool,
    dropped: u64,
}

/// Bounded drop-oldest frame queue shared by the simulation and the
/// connection thread.
#[derive(Debug)]
pub struct FrameQueue {
    state: Mutex<QueueState>,
    ready: Condvar,
    capacity: usize,
}

impl FrameQueue {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        Self { state: Mutex::new(QueueState::default()), ready: Condvar::new(), capacity }
    }

    /// Queues a frame and returns the number of frames dropped so far.
    pub fn push(&self, frame: String) -> u64 {
        let mut s = self.state.lock().unwrap();
        if s.connected {
            if s.frames.len() == self.capacity {
                s.frames.pop_front();
                s.dropped += 1;
            }
            s.frames.push_back(frame);
            self.ready.notify_one();
        }
        s.dropped
    }

    /// Waits up to `timeout` for the oldest frame.
    pub fn pop(&self, timeout: Duration) -> Option<String> {
        let s = self.state.lock().unwrap();
        let (mut s, _) = self.ready.wait_timeout_while(s, timeout, |s| s.frames.is_empty()).unwrap();
        s.frames.pop_front()
    }

    pub fn set_connected(&self, connected: bool) {
        let mut s = self.state.lock().unwrap();
        s.connected = connected;
        if !connected {
            s.frames.clear();
        }
    }

    pub fn is_connected(&self) -> bool {
        self.state.lock().unwrap().connected
    }

    pub fn dropped(&self) -> u64 {
        self.state.lock().unwrap().dropped
    }

    pub fn len(&self) -> usize {
        self.state.lock().unwrap().frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub struct TelemetryServer {
    pub addr: SocketAddr,
    pub queue: Arc<FrameQueue>,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl TelemetryServer {
    /// Binds `port` (0 picks a free one) and starts accepting clients.
    /// Returns the server and the receiving end of the command channel.
    pub fn start(port: u16) -> io::Result<(Self, Receiver<String>)> {
        let listener = TcpListener::bind(("127.0.0.1", port))?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let queue = Arc::new(FrameQueue::new(QUEUE_CAPACITY));
        let stop = Arc::new(AtomicBool::new(false));
        let (tx, rx) = mpsc::sync_channel(COMMAND_CAPACITY);
        let handle = {
            let (queue, stop) = (queue.clone(), stop.clone());
            std::thread::Builder::new()
                .name("telemetry".into())
                .spawn(move || accept_loop(listener, queue, tx, stop))?
        };
        Ok((Self { addr, queue, stop, handle: Some(handle) }, rx))
    }

    /// Telemetry sink for the real-time loop.
    pub fn sink(&self) -> impl FnMut(Outbound) -> u64 + '_ {
        |msg| self.queue.push(msg.to_json())
    }
}

impl Drop for TelemetryServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn accept_loop(listener: TcpListener, queue: Arc<FrameQueue>, commands: SyncSender<String>, stop: Arc<AtomicBool>) {
    while !stop.load(Ordering::Relaxed) {
        match listener.accept() {
            Ok((stream, peer)) => {
                if let Err(e) = serve(stream, &queue, &commands, &stop) {
                    eprintln!("client {peer}: {e}");
                }
                queue.set_connected(false);
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => std::thread::sleep(POLL),
            Err(e) => {
                eprintln!("accept: {e}");
                std::thread::sleep(POLL);
            }
        }
    }
}

fn serve(
    stream: TcpStream,
    queue: &FrameQueue,
    commands: &SyncSender<String>,
    stop: &AtomicBool,
) -> anyhow::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    let mut ws = tungstenite::accept(stream).map_err(|e| anyhow::anyhow!("handshake failed: {e}"))?;
    // short reads so one thread can interleave writing and reading
    ws.get_ref().set_read_timeout(Some(Duration::from_millis(1)))?;
    queue.set_connected(true);
    while !stop.load(Ordering::Relaxed) {
        if let Some(frame) = queue.pop(POLL) {
            ws.send(Message::text(frame))?;
        }
        match ws.read() {
            Ok(Message::Text(text)) => forward(&mut ws, commands, text.as_str())?,
            Ok(Message::Close(_)) => return Ok(()),
            Ok(_) => {}
            Err(tungstenite::Error::Io(e))
                if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
            Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => return Ok(()),
            Err(e) => return Err(e.into()),
        }
    }
    // frames of the final intervals are still owed to the client
    while let Some(frame) = queue.pop(Duration::ZERO) {
        ws.send(Message::text(frame))?;
    }
    let _ = ws.close(None);
    let _ = ws.flush();
    Ok(())
}

fn forward(ws: &mut WebSocket<TcpStream>, commands: &SyncSender<String>, text: &str) -> anyhow::Result<()> {
    match commands.try_send(text.to_owned()) {
        Ok(()) => Ok(()),
        Err(TrySendError::Full(_)) => {
            ws.send(Message::text(Outbound::error("command queue full; command ignored").to_json()))?;
            Ok(())
        }
        // the simulation has ended; nothing left to control
        Err(TrySendError::Disconnected(_)) => Ok(()),
    }
}
