//! Simulated SMS gateways.
//!
//! [`LoopbackGateway`] pairs devices inside one process through per-number
//! mailboxes. [`TcpGatewayServer`] and [`TcpGateway`] carry the same
//! traffic between processes using a line protocol:
//!
//! ```text
//! REG<TAB>number<LF>
//! SMS<TAB>from<TAB>to<TAB>message_id<TAB>index<TAB>total<TAB>payload<LF>
//! ```
//!
//! `REG` claims a number for the connection; the payload percent-encodes
//! TAB, LF, CR and `%`.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::str::FromStr;
use std::sync::{Arc, Mutex};
use std::thread;

use super::location::UserId;
use super::sms::{MessageId, SmsError, SmsSegment};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GatewayError {
    #[error("gateway unreachable: {0}")]
    GatewayUnreachable(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("invalid gateway address '{0}': expected 'loopback' or 'tcp://host:port'")]
    InvalidAddress(String),
}

/// One segment in transit between two numbers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireSms {
    pub from: UserId,
    pub to: UserId,
    pub segment: SmsSegment,
}

pub trait SmsGateway: Send + Sync {
    /// Announces that `number` is served by this endpoint.
    fn attach(&self, number: &UserId) -> Result<(), GatewayError> {
        let _ = number;
        Ok(())
    }

    fn send(&self, sms: WireSms) -> Result<(), GatewayError>;

    /// Drains everything queued for `number`, in arrival order.
    fn receive(&self, number: &UserId) -> Vec<WireSms>;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GatewayAddress {
    Loopback,
    Tcp(String),
}

impl FromStr for GatewayAddress {
    type Err = GatewayError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "loopback" {
            return Ok(GatewayAddress::Loopback);
        }
        match s.strip_prefix("tcp://") {
            Some(hp) if hp.rsplit_once(':').is_some_and(|(h, p)| !h.is_empty() && p.parse::<u16>().is_ok()) => {
                Ok(GatewayAddress::Tcp(hp.to_string()))
            }
            _ => Err(GatewayError::InvalidAddress(s.to_string())),
        }
    }
}

impl fmt::Display for GatewayAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GatewayAddress::Loopback => f.write_str("loopback"),
            GatewayAddress::Tcp(hp) => write!(f, "tcp://{hp}"),
        }
    }
}

/// In-process gateway: one FIFO mailbox per destination number.
#[derive(Debug, Default)]
pub struct LoopbackGateway {
    mailboxes: Mutex<HashMap<UserId, VecDeque<WireSms>>>,
}

impl LoopbackGateway {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    pub fn queued(&self) -> usize {
        self.mailboxes.lock().unwrap().values().map(VecDeque::len).sum()
    }
}

impl SmsGateway for LoopbackGateway {
    fn send(&self, sms: WireSms) -> Result<(), GatewayError> {
        self.mailboxes.lock().unwrap().entry(sms.to.clone()).or_default().push_back(sms);
        Ok(())
    }

    fn receive(&self, number: &UserId) -> Vec<WireSms> {
        self.mailboxes
            .lock()
            .unwrap()
            .get_mut(number)
            .map(|q| q.drain(..).collect())
            .unwrap_or_default()
    }
}

fn percent_encode(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\t' => out.push_str("%09"),
            '\n' => out.push_str("%0A"),
            '\r' => out.push_str("%0D"),
            '%' => out.push_str("%25"),
            c => out.push(c),
        }
    }
    out
}

fn percent_decode(s: &str) -> Result<String, GatewayError> {
    let bytes = s.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' {
            let hex = s
                .get(i + 1..i + 3)
                .and_then(|h| u8::from_str_radix(h, 16).ok())
                .ok_or_else(|| GatewayError::Protocol(format!("bad escape in '{s}'")))?;
            out.push(hex);
            i += 3;
        } else {
            out.push(bytes[i]);
            i += 1;
        }
    }
    String::from_utf8(out).map_err(|e| GatewayError::Protocol(e.to_string()))
}

/// Serializes one segment as an `SMS` protocol line, including the LF.
pub fn encode_line(sms: &WireSms) -> String {
    let s = &sms.segment;
    format!(
        "SMS\t{}\t{}\t{}\t{}\t{}\t{}\n",
        sms.from,
        sms.to,
        s.message_id,
        s.index,
        s.total,
        percent_encode(&s.payload)
    )
}

pub fn decode_line(line: &str) -> Result<WireSms, GatewayError> {
    let line = line.strip_suffix('\n').unwrap_or(line);
    let fields: Vec<&str> = line.split('\t').collect();
    let proto = |e: &dyn fmt::Display| GatewayError::Protocol(e.to_string());
    match fields.as_slice() {
        ["SMS", from, to, id, index, total, payload] => {
            let segment = SmsSegment {
                message_id: id.parse::<MessageId>().map_err(|e| proto(&e))?,
                index: index.parse().map_err(|e| proto(&e))?,
                total: total.parse().map_err(|e| proto(&e))?,
                payload: percent_decode(payload)?,
            };
            segment.validate().map_err(|e: SmsError| proto(&e))?;
            Ok(WireSms {
                from: UserId::new(*from).map_err(|e| proto(&e))?,
                to: UserId::new(*to).map_err(|e| proto(&e))?,
                segment,
            })
        }
        _ => Err(GatewayError::Protocol(format!("unrecognised line '{line}'"))),
    }
}

#[derive(Default)]
struct Routes {
    clients: HashMap<String, TcpStream>,
    pending: HashMap<String, Vec<String>>,
}

/// TCP gateway hub: routes `SMS` lines to the connection that registered
/// the destination number, queueing until that number registers.
pub struct TcpGatewayServer {
    listener: TcpListener,
    routes: Arc<Mutex<Routes>>,
}

impl TcpGatewayServer {
    pub fn bind(addr: impl ToSocketAddrs) -> std::io::Result<Self> {
        Ok(Self { listener: TcpListener::bind(addr)?, routes: Arc::default() })
    }

    pub fn local_addr(&self) -> std::io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Accepts connections forever on a background thread.
    pub fn spawn(self) -> thread::JoinHandle<()> {
        thread::spawn(move || self.serve())
    }

    pub fn serve(self) {
        for stream in self.listener.incoming() {
            match stream {
                Ok(stream) => {
                    let routes = self.routes.clone();
                    thread::spawn(move || handle_client(stream, routes));
                }
                Err(e) => log::warn!("gateway accept failed: {e}"),
            }
        }
    }
}

fn handle_client(stream: TcpStream, routes: Arc<Mutex<Routes>>) {
    let peer = stream.peer_addr().map(|a| a.to_string()).unwrap_or_default();
    let Ok(read_half) = stream.try_clone() else { return };
    let mut claimed: Vec<String> = Vec::new();
    for line in BufReader::new(read_half).lines() {
        let Ok(line) = line else { break };
        let mut parts = line.splitn(2, '\t');
        match (parts.next(), parts.next()) {
            (Some("REG"), Some(number)) => {
                let number = number.to_string();
                let Ok(mut writer) = stream.try_clone() else { break };
                let mut r = routes.lock().unwrap();
                for queued in r.pending.remove(&number).unwrap_or_default() {
                    let _ = writer.write_all(queued.as_bytes());
                }
                r.clients.insert(number.clone(), writer);
                claimed.push(number);
            }
            (Some("SMS"), Some(_)) => match decode_line(&line) {
                Ok(sms) => route(&routes, sms.to.as_str(), format!("{line}\n")),
                Err(e) => log::warn!("gateway: dropping line from {peer}: {e}"),
            },
            _ => log::warn!("gateway: unrecognised line from {peer}"),
        }
    }
    let mut r = routes.lock().unwrap();
    for number in claimed {
        r.clients.remove(&number);
    }
}

fn route(routes: &Mutex<Routes>, to: &str, line: String) {
    let mut r = routes.lock().unwrap();
    if let Some(w) = r.clients.get_mut(to) {
        if w.write_all(line.as_bytes()).is_ok() {
            return;
        }
        r.clients.remove(to);
    }
    r.pending.entry(to.to_string()).or_default().push(line);
}

type Mailboxes = Arc<Mutex<HashMap<UserId, VecDeque<WireSms>>>>;

/// Client side of the TCP gateway protocol.
pub struct TcpGateway {
    writer: Mutex<TcpStream>,
    mailboxes: Mailboxes,
}

impl TcpGateway {
    pub fn connect(addr: &str) -> Result<Self, GatewayError> {
        let stream = TcpStream::connect(addr).map_err(|e| GatewayError::GatewayUnreachable(format!("{addr}: {e}")))?;
        let reader = stream.try_clone().map_err(|e| GatewayError::GatewayUnreachable(e.to_string()))?;
        let mailboxes: Mailboxes = Arc::default();
        let boxes = mailboxes.clone();
        thread::spawn(move || {
            for line in BufReader::new(reader).lines() {
                let Ok(line) = line else { break };
                match decode_line(&line) {
                    Ok(sms) => boxes.lock().unwrap().entry(sms.to.clone()).or_default().push_back(sms),
                    Err(e) => log::warn!("gateway client: {e}"),
                }
            }
        });
        Ok(Self { writer: Mutex::new(stream), mailboxes })
    }

    fn write(&self, line: &str) -> Result<(), GatewayError> {
        let mut w = self.writer.lock().unwrap();
        w.write_all(line.as_bytes())
            .and_then(|_| w.flush())
            .map_err(|e| GatewayError::GatewayUnreachable(e.to_string()))
    }
}

impl SmsGateway for TcpGateway {
    fn attach(&self, number: &UserId) -> Result<(), GatewayError> {
        self.write(&format!("REG\t{number}\n"))
    }

    fn send(&self, sms: WireSms) -> Result<(), GatewayError> {
        self.write(&encode_line(&sms))
    }

    fn receive(&self, number: &UserId) -> Vec<WireSms> {
        self.mailboxes
            .lock()
            .unwrap()
            .get_mut(number)
            .map(|q| q.drain(..).collect())
            .unwrap_or_default()
    }
}

/// Opens a gateway for `address`; loopback addresses resolve to `loopback`.
pub fn open_gateway(
    address: &GatewayAddress,
    loopback: &Arc<LoopbackGateway>,
) -> Result<Arc<dyn SmsGateway>, GatewayError> {
    match address {
        GatewayAddress::Loopback => Ok(loopback.clone()),
        GatewayAddress::Tcp(hp) => Ok(Arc::new(TcpGateway::connect(hp)?)),
    }
}
