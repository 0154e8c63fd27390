//! Live streaming front end for the deskew pipeline.
//!
//! Frames leave as self-describing binary packets ([`packet`]); clients steer
//! the pipeline with JSON control messages ([`control`]). Both travel over a
//! WebSocket, or over raw TCP for headless clients where each message is
//! prefixed by its length and a one-byte kind.
//!
//! The pipeline publishes encoded packets into a broadcast hub. Each client
//! session has its own bounded view of the hub: a client that falls behind
//! loses the oldest packets rather than stalling the pipeline or its peers.

pub mod control;
pub mod packet;

use std::future::Future;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use futures_util::{SinkExt, StreamExt};
use thiserror::Error;
use tokio::io::{AsyncRead, AsyncReadExt, AsyncWrite, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{broadcast, mpsc};
use tokio_tungstenite::tungstenite::Message;

use skewstream_core::clock::Clock;
use skewstream_core::pipeline::{FrameSink, LiveConfig, LivePipeline, TelemetryHub};
use skewstream_core::source::FrameSource;

pub use control::{Applied, Command, ControlContext, ControlMessage, Reply};
pub use packet::{encode_frame_packet, FramePacket, PacketError, PacketHeader, PixelFormat};

pub const DEFAULT_LISTEN: &str = "127.0.0.1:8765";
pub const LISTEN_ENV: &str = "SKEWSTREAM_LISTEN";

/// Packets a client may fall behind before its oldest ones are dropped.
pub const DEFAULT_CLIENT_QUEUE: usize = 4;

/// Raw-TCP message kinds.
pub const TCP_FRAME: u8 = 1;
pub const TCP_JSON: u8 = 2;

/// Upper bound on a raw-TCP message body.
const MAX_TCP_MESSAGE: usize = 256 << 20;

#[derive(Debug, Error)]
pub enum ServerError {
    #[error(transparent)]
    Pipeline(#[from] skewstream_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("websocket: {0}")]
    WebSocket(Box<tokio_tungstenite::tungstenite::Error>),
    #[error("raw tcp message of {0} bytes exceeds the limit")]
    Oversize(usize),
}

impl From<tokio_tungstenite::tungstenite::Error> for ServerError {
    fn from(e: tokio_tungstenite::tungstenite::Error) -> Self {
        ServerError::WebSocket(Box::new(e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Transport {
    #[default]
    WebSocket,
    Tcp,
}

/// Fan-out point between the pipeline and client sessions.
#[derive(Clone)]
pub struct FrameHub {
    tx: broadcast::Sender<Arc<Vec<u8>>>,
    published: Arc<AtomicU64>,
}

impl FrameHub {
    pub fn new(client_queue: usize) -> Self {
        let (tx, _) = broadcast::channel(client_queue.max(1));
        Self { tx, published: Arc::new(AtomicU64::new(0)) }
    }

    pub fn publish(&self, packet: Vec<u8>) {
        self.published.fetch_add(1, Ordering::Relaxed);
        // No subscribers is not an error: frames are simply not watched.
        let _ = self.tx.send(Arc::new(packet));
    }

    pub fn subscribe(&self) -> broadcast::Receiver<Arc<Vec<u8>>> {
        self.tx.subscribe()
    }

    pub fn published(&self) -> u64 {
        self.published.load(Ordering::Relaxed)
    }

    /// Pipeline sink that encodes every display image and publishes it.
    pub fn sink(&self, format: PixelFormat, telemetry: TelemetryHub) -> FrameSink {
        let hub = self.clone();
        Box::new(move |image| match encode_frame_packet(&image, format, telemetry.snapshot().drops) {
            Ok(bytes) => hub.publish(bytes),
            Err(e) => log::warn!("frame not sent: {e}"),
        })
    }
}

/// A running pipeline wired to a hub, plus the control context sessions use.
pub struct LiveSession {
    pub pipeline: LivePipeline,
    pub hub: FrameHub,
    pub control: ControlContext,
}

pub fn start_live(
    source: Box<dyn FrameSource>,
    clock: Arc<dyn Clock>,
    config: LiveConfig,
    format: PixelFormat,
    client_queue: usize,
) -> Result<LiveSession, ServerError> {
    let hub = FrameHub::new(client_queue);
    let channel_ids = config.layout.channel_ids();
    let sink = hub.sink(format, config.telemetry.clone());
    let pipeline = LivePipeline::start(source, clock, config, sink)?;
    let control = ControlContext {
        mailbox: pipeline.mailbox().clone(),
        geometry: *pipeline.geometry(),
        capabilities: pipeline.capabilities(),
        channel_ids,
    };
    Ok(LiveSession { pipeline, hub, control })
}

/// Accepts clients until `shutdown` resolves. One task per client.
pub async fn serve(
    listener: TcpListener,
    transport: Transport,
    hub: FrameHub,
    control: ControlContext,
    shutdown: impl Future<Output = ()>,
) -> Result<(), ServerError> {
    tokio::pin!(shutdown);
    loop {
        tokio::select! {
            _ = &mut shutdown => return Ok(()),
            accepted = listener.accept() => {
                let (stream, peer) = accepted?;
                let (rx, control) = (hub.subscribe(), control.clone());
                tokio::spawn(async move {
                    let result = match transport {
                        Transport::WebSocket => websocket_session(stream, rx, control).await,
                        Transport::Tcp => tcp_session(stream, rx, control).await,
                    };
                    match result {
                        Ok(dropped) => log::info!("client {peer} left; {dropped} packets dropped for it"),
                        Err(e) => log::warn!("client {peer}: {e}"),
                    }
                });
            }
        }
    }
}

pub async fn bind(addr: &str) -> Result<(TcpListener, SocketAddr), ServerError> {
    let listener = TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    Ok((listener, local))
}

async fn websocket_session(
    stream: TcpStream,
    mut frames: broadcast::Receiver<Arc<Vec<u8>>>,
    control: ControlContext,
) -> Result<u64, ServerError> {
    let mut ws = tokio_tungstenite::accept_async(stream).await?;
    let mut dropped = 0;
    loop {
        tokio::select! {
            frame = frames.recv() => match frame {
                Ok(bytes) => ws.send(Message::Binary(bytes.to_vec())).await?,
                Err(broadcast::error::RecvError::Lagged(n)) => dropped += n,
                Err(broadcast::error::RecvError::Closed) => break,
            },
            incoming = ws.next() => match incoming {
                Some(Ok(Message::Text(text))) => {
                    ws.send(Message::Text(control.handle_text(&text).to_json())).await?;
                }
                Some(Ok(Message::Binary(_))) => {
                    let reply = Reply::Nack { request_id: None, reason: "control messages must be JSON text".into() };
                    ws.send(Message::Text(reply.to_json())).await?;
                }
                Some(Ok(Message::Close(_))) | None => break,
                Some(Ok(_)) => {}
                Some(Err(e)) => return Err(e.into()),
            },
        }
    }
    let _ = ws.close(None).await;
    Ok(dropped)
}

pub async fn write_tcp_message<W: AsyncWrite + Unpin>(w: &mut W, kind: u8, body: &[u8]) -> Result<(), ServerError> {
    if body.len() > MAX_TCP_MESSAGE {
        return Err(ServerError::Oversize(body.len()));
    }
    let mut head = [0u8; 5];
    head[..4].copy_from_slice(&(body.len() as u32).to_le_bytes());
    head[4] = kind;
    w.write_all(&head).await?;
    w.write_all(body).await?;
    w.flush().await?;
    Ok(())
}

/// Reads one `[u32 length][u8 kind][body]` message; `None` on clean EOF.
pub async fn read_tcp_message<R: AsyncRead + Unpin>(r: &mut R) -> Result<Option<(u8, Vec<u8>)>, ServerError> {
    let mut head = [0u8; 5];
    match r.read_exact(&mut head).await {
        Ok(_) => {}
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let len = u32::from_le_bytes(head[..4].try_into().unwrap()) as usize;
    if len > MAX_TCP_MESSAGE {
        return Err(ServerError::Oversize(len));
    }
    let mut body = vec![0; len];
    r.read_exact(&mut body).await?;
    Ok(Some((head[4], body)))
}

async fn tcp_session(
    stream: TcpStream,
    mut frames: broadcast::Receiver<Arc<Vec<u8>>>,
    control: ControlContext,
) -> Result<u64, ServerError> {
    let (mut reader, mut writer) = stream.into_split();
    let (reply_tx, mut replies) = mpsc::unbounded_channel::<String>();
    let read_task = tokio::spawn(async move {
        while let Some((kind, body)) = read_tcp_message(&mut reader).await? {
            let reply = if kind == TCP_JSON {
                control.handle_text(&String::from_utf8_lossy(&body))
            } else {
                Reply::Nack { request_id: None, reason: format!("unexpected message kind {kind}") }
            };
            if reply_tx.send(reply.to_json()).is_err() {
                break;
            }
        }
        Ok::<_, ServerError>(())
    });

    let mut dropped = 0;
    loop {
        tokio::select! {
            frame = frames.recv() => match frame {
                Ok(bytes) => write_tcp_message(&mut writer, TCP_FRAME, &bytes).await?,
                Err(broadcast::error::RecvError::Lagged(n)) => dropped += n,
                Err(broadcast::error::RecvError::Closed) => break,
            },
            reply = replies.recv() => match reply {
                Some(json) => write_tcp_message(&mut writer, TCP_JSON, json.as_bytes()).await?,
                None => break,
            },
        }
    }
    read_task.abort();
    Ok(dropped)
}
