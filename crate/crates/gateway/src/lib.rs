//! WebSocket gateway between a running session and observer clients.
//!
//! Outbound, every `dm.state` and `agent.*` bus message is sent to every
//! connected client as an `event` frame. Inbound, clients send `behavior` and
//! `control` frames; valid ones are forwarded to the session's operator
//! channel and acknowledged, invalid ones get an `error` frame and the
//! connection stays open. See `frame` for the wire format.

mod frame;

use std::io::ErrorKind;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use crossbeam_channel::{unbounded, Receiver, Sender};
use thiserror::Error;
use tungstenite::{Message as WsMessage, WebSocket};

use rave_core::behavior::BehaviorCatalog;
use rave_core::bus::{Subscription, TopicPattern};
use rave_core::events::{Payload, SessionControl};
use rave_core::sim::OperatorInput;
use rave_core::{BusError, EventBus};

pub use frame::{BehaviorPayload, ErrorPayload, Frame, FrameKind, HelloPayload, FRAME_VERSION};

/// Topic patterns forwarded to clients.
pub const OUTBOUND_PATTERNS: [&str; 2] = ["dm.state", "agent.*"];

const POLL: Duration = Duration::from_millis(10);

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error(transparent)]
    Bus(#[from] BusError),
}

type Clients = Arc<Mutex<Vec<Sender<String>>>>;

/// A running gateway. Dropping it without [`shutdown`](Self::shutdown) leaves
/// the threads running until the bus and operator channel close.
pub struct Gateway {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    threads: Vec<JoinHandle<()>>,
}

impl Gateway {
    /// Binds `addr` (port 0 picks a free port) and starts forwarding.
    pub fn serve(addr: &str, bus: &EventBus, operator: Sender<OperatorInput>) -> Result<Self, GatewayError> {
        let listener = TcpListener::bind(addr).map_err(|source| GatewayError::Bind { addr: addr.to_string(), source })?;
        let local = listener.local_addr().map_err(|source| GatewayError::Bind { addr: addr.to_string(), source })?;
        listener.set_nonblocking(true).map_err(|source| GatewayError::Bind { addr: addr.to_string(), source })?;

        let stop = Arc::new(AtomicBool::new(false));
        let clients: Clients = Arc::default();
        let sub = bus.subscribe("*")?;
        let patterns = OUTBOUND_PATTERNS.iter().map(|p| TopicPattern::parse(p)).collect::<Result<Vec<_>, _>>()?;

        let fanout = {
            let (stop, clients) = (stop.clone(), clients.clone());
            thread::spawn(move || fan_out(sub, patterns, clients, stop))
        };
        let acceptor = {
            let stop = stop.clone();
            thread::spawn(move || accept_loop(listener, clients, operator, stop))
        };
        log::info!("gateway listening on ws://{local}");
        Ok(Self { addr: local, stop, threads: vec![fanout, acceptor] })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(mut self) {
        self.stop.store(true, Ordering::SeqCst);
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

fn fan_out(mut sub: Subscription<Payload>, patterns: Vec<TopicPattern>, clients: Clients, stop: Arc<AtomicBool>) {
    while !stop.load(Ordering::SeqCst) {
        let msg = match sub.recv_timeout(POLL) {
            Ok(Some(m)) => m,
            Ok(None) => continue,
            Err(_) => return,
        };
        if !patterns.iter().any(|p| p.matches(msg.topic.as_str())) {
            continue;
        }
        let text = Frame::event(&msg).to_text();
        clients.lock().expect("client list poisoned").retain(|c| c.send(text.clone()).is_ok());
    }
}

fn accept_loop(listener: TcpListener, clients: Clients, operator: Sender<OperatorInput>, stop: Arc<AtomicBool>) {
    let mut handlers = Vec::new();
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                let (tx, rx) = unbounded();
                let operator = operator.clone();
                let stop = stop.clone();
                let registered = clients.clone();
                handlers.push(thread::spawn(move || {
                    if let Err(e) = handle_client(stream, tx, rx, &registered, operator, stop) {
                        log::debug!("client {peer} closed: {e}");
                    }
                }));
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => thread::sleep(POLL),
            Err(e) => {
                log::warn!("accept failed: {e}");
                thread::sleep(POLL);
            }
        }
    }
    for h in handlers {
        let _ = h.join();
    }
}

fn handle_client(
    stream: TcpStream,
    tx: Sender<String>,
    rx: Receiver<String>,
    clients: &Clients,
    operator: Sender<OperatorInput>,
    stop: Arc<AtomicBool>,
) -> Result<(), tungstenite::Error> {
    stream.set_nonblocking(false)?;
    let mut ws = tungstenite::accept(stream).map_err(|e| match e {
        tungstenite::HandshakeError::Failure(e) => e,
        tungstenite::HandshakeError::Interrupted(_) => tungstenite::Error::ConnectionClosed,
    })?;
    ws.get_mut().set_read_timeout(Some(POLL))?;

    let catalog = BehaviorCatalog::default();
    clients.lock().expect("client list poisoned").push(tx);
    ws.send(WsMessage::Text(Frame::hello(&OUTBOUND_PATTERNS, catalog.labels().map(String::from).collect()).to_text()))?;

    while !stop.load(Ordering::SeqCst) {
        while let Ok(text) = rx.try_recv() {
            ws.send(WsMessage::Text(text))?;
        }
        match ws.read() {
            Ok(WsMessage::Text(text)) => {
                let reply = inbound(&text, &catalog, &operator);
                ws.send(WsMessage::Text(reply.to_text()))?;
            }
            Ok(WsMessage::Close(_)) => return Ok(()),
            Ok(_) => {}
            Err(tungstenite::Error::Io(e)) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
            Err(e) => return Err(e),
        }
    }
    let _ = ws.close(None);
    let _ = ws.flush();
    Ok(())
}

/// Validates one inbound text frame and forwards it; returns the reply frame.
pub fn inbound(text: &str, catalog: &BehaviorCatalog, operator: &Sender<OperatorInput>) -> Frame {
    let frame: Frame = match serde_json::from_str(text) {
        Ok(f) => f,
        Err(e) => return Frame::error("MalformedFrame", e.to_string()),
    };
    if frame.v != FRAME_VERSION {
        return Frame::error("UnsupportedVersion", format!("expected v {FRAME_VERSION}, got {}", frame.v));
    }
    let input = match frame.kind {
        FrameKind::Behavior => {
            let p: BehaviorPayload = match serde_json::from_value(frame.payload.clone()) {
                Ok(p) => p,
                Err(e) => return Frame::error("MalformedFrame", e.to_string()),
            };
            if let Err(e) = catalog.get(&p.label) {
                return Frame::error("UnknownLabel", e.to_string());
            }
            OperatorInput::Behavior { label: p.label }
        }
        FrameKind::Control => match serde_json::from_value::<SessionControl>(frame.payload.clone()) {
            Ok(c) => OperatorInput::Control(c),
            Err(e) => return Frame::error("MalformedFrame", e.to_string()),
        },
        other => {
            return Frame::error("UnexpectedKind", format!("clients may not send {other:?} frames"));
        }
    };
    if operator.send(input).is_err() {
        return Frame::error("SessionClosed", "the session is no longer accepting input");
    }
    Frame::ack(frame.kind, frame.payload)
}

/// Minimal blocking client, used by tests and scripts.
pub struct Client {
    ws: WebSocket<tungstenite::stream::MaybeTlsStream<TcpStream>>,
}

impl Client {
    pub fn connect(addr: SocketAddr) -> Result<Self, tungstenite::Error> {
        let (ws, _) = tungstenite::connect(format!("ws://{addr}"))?;
        Ok(Self { ws })
    }

    pub fn send(&mut self, frame: &Frame) -> Result<(), tungstenite::Error> {
        self.ws.send(WsMessage::Text(frame.to_text()))
    }

    pub fn send_text(&mut self, text: &str) -> Result<(), tungstenite::Error> {
        self.ws.send(WsMessage::Text(text.to_string()))
    }

    /// Next text frame, skipping control messages.
    pub fn recv(&mut self) -> Result<Frame, tungstenite::Error> {
        loop {
            if let WsMessage::Text(t) = self.ws.read()? {
                return serde_json::from_str(&t).map_err(|e| {
                    tungstenite::Error::Io(std::io::Error::new(ErrorKind::InvalidData, e))
                });
            }
        }
    }

    /// Reads frames until one satisfies `pred`.
    pub fn recv_until(&mut self, mut pred: impl FnMut(&Frame) -> bool) -> Result<Frame, tungstenite::Error> {
        loop {
            let f = self.recv()?;
            if pred(&f) {
                return Ok(f);
            }
        }
    }

    pub fn close(mut self) {
        let _ = self.ws.close(None);
        let _ = self.ws.flush();
    }
}
