//! Framed binary protocol.
//!
//! A frame is a 4-byte little-endian payload length, a 1-byte message type
//! and the payload. All integers are little-endian; strings carry a u16
//! length prefix and sequences a u32 count.

use std::io::{self, Read, Write};

use apls_core::plan::{AgentLocation, SubRequestCommand};
use apls_core::strategy::{PayloadInfo, Strategy};
use apls_core::NodeId;

pub const HEADER_LEN: usize = 5;
pub const MAX_PAYLOAD: usize = 1 << 27;

#[derive(Debug, thiserror::Error)]
pub enum WireError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("stream ended inside a frame")]
    Truncated,
    #[error("unknown message type {0}")]
    UnknownType(u8),
    #[error("payload of {0} bytes exceeds limit")]
    TooLarge(usize),
    #[error("malformed {0}")]
    Malformed(&'static str),
}

type WResult<T> = std::result::Result<T, WireError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum MsgType {
    ReadReq = 1,
    ReadResp = 2,
    SubreqCmd = 3,
    Packet = 4,
    Done = 5,
    Error = 6,
}

impl MsgType {
    pub fn from_u8(b: u8) -> WResult<MsgType> {
        Ok(match b {
            1 => MsgType::ReadReq,
            2 => MsgType::ReadResp,
            3 => MsgType::SubreqCmd,
            4 => MsgType::Packet,
            5 => MsgType::Done,
            6 => MsgType::Error,
            _ => return Err(WireError::UnknownType(b)),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub kind: MsgType,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut v = Vec::with_capacity(HEADER_LEN + self.payload.len());
        v.extend_from_slice(&(self.payload.len() as u32).to_le_bytes());
        v.push(self.kind as u8);
        v.extend_from_slice(&self.payload);
        v
    }

    /// Parses one frame from the front of `buf`. `Ok(None)` means more
    /// bytes are needed.
    pub fn parse(buf: &[u8]) -> WResult<Option<(Frame, usize)>> {
        if buf.len() < HEADER_LEN {
            return Ok(None);
        }
        let len = u32::from_le_bytes(buf[..4].try_into().unwrap()) as usize;
        if len > MAX_PAYLOAD {
            return Err(WireError::TooLarge(len));
        }
        let kind = MsgType::from_u8(buf[4])?;
        if buf.len() < HEADER_LEN + len {
            return Ok(None);
        }
        let payload = buf[HEADER_LEN..HEADER_LEN + len].to_vec();
        Ok(Some((Frame { kind, payload }, HEADER_LEN + len)))
    }
}

/// Reads one frame; `Ok(None)` on a clean end of stream between frames.
pub fn read_frame<R: Read>(r: &mut R) -> WResult<Option<Frame>> {
    let mut header = [0u8; HEADER_LEN];
    let mut got = 0;
    while got < HEADER_LEN {
        match r.read(&mut header[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(WireError::Truncated),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let len = u32::from_le_bytes(header[..4].try_into().unwrap()) as usize;
    if len > MAX_PAYLOAD {
        return Err(WireError::TooLarge(len));
    }
    let kind = MsgType::from_u8(header[4])?;
    let mut payload = vec![0u8; len];
    r.read_exact(&mut payload).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => WireError::Truncated,
        _ => WireError::Io(e),
    })?;
    Ok(Some(Frame { kind, payload }))
}

pub fn write_frame<W: Write>(w: &mut W, frame: &Frame) -> io::Result<()> {
    let mut header = [0u8; HEADER_LEN];
    header[..4].copy_from_slice(&(frame.payload.len() as u32).to_le_bytes());
    header[4] = frame.kind as u8;
    w.write_all(&header)?;
    w.write_all(&frame.payload)
}

/// How the requestor wants a chunk served.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReadMode {
    /// Direct read when the chunk is available, otherwise the coordinator's
    /// default reconstruction.
    Auto,
    /// Reconstruct even if the chunk is available.
    Degraded(Strategy),
}

const MODE_AUTO: u8 = 0xFF;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReadRequest {
    pub read_id: u64,
    pub stripe: u32,
    pub chunk: u32,
    pub mode: ReadMode,
    /// Upper bound on agents, 0 for no bound.
    pub max_agents: u32,
    pub reply_addr: String,
}

/// Per-read context around the sub-request command.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandEnvelope {
    pub read_id: u64,
    pub stripe: u32,
    pub starter: NodeId,
    pub starter_addr: String,
    pub requestor_addr: String,
    pub command: SubRequestCommand,
}

impl CommandEnvelope {
    pub fn addr_of(&self, node: NodeId) -> Option<&str> {
        if node == NodeId::REQUESTOR {
            return Some(&self.requestor_addr);
        }
        if node == self.starter {
            return Some(&self.starter_addr);
        }
        self.command.agent_locations.iter().find(|l| l.node == node).map(|l| l.addr.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReadResponse {
    Redirect { read_id: u64, node: NodeId, addr: String },
    Plan(CommandEnvelope),
    Error(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PacketFrame {
    pub read_id: u64,
    pub key: PayloadInfo,
    pub data: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    ReadReq(ReadRequest),
    ReadResp(ReadResponse),
    SubreqCmd(CommandEnvelope),
    Packet(PacketFrame),
    Done { read_id: u64 },
    Error { read_id: u64, message: String },
}

struct Enc(Vec<u8>);

impl Enc {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        let b = s.as_bytes();
        let n = b.len().min(u16::MAX as usize);
        self.0.extend_from_slice(&(n as u16).to_le_bytes());
        self.0.extend_from_slice(&b[..n]);
    }
    fn bytes(&mut self, b: &[u8]) {
        self.u32(b.len() as u32);
        self.0.extend_from_slice(b);
    }
}

struct Dec<'a>(&'a [u8]);

impl<'a> Dec<'a> {
    fn take(&mut self, n: usize) -> WResult<&'a [u8]> {
        if self.0.len() < n {
            return Err(WireError::Malformed("field"));
        }
        let (a, b) = self.0.split_at(n);
        self.0 = b;
        Ok(a)
    }
    fn u8(&mut self) -> WResult<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> WResult<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> WResult<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> WResult<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn str(&mut self) -> WResult<String> {
        let n = self.u16()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| WireError::Malformed("string"))
    }
    fn bytes(&mut self) -> WResult<Vec<u8>> {
        let n = self.u32()? as usize;
        Ok(self.take(n)?.to_vec())
    }
    fn count(&mut self, min_item: usize) -> WResult<usize> {
        let n = self.u32()? as usize;
        if n.saturating_mul(min_item) > self.0.len() {
            return Err(WireError::Malformed("count"));
        }
        Ok(n)
    }
    fn finish(self) -> WResult<()> {
        if self.0.is_empty() {
            Ok(())
        } else {
            Err(WireError::Malformed("trailing bytes"))
        }
    }
}

fn strategy(code: u8) -> WResult<Strategy> {
    Strategy::from_code(code).map_err(|_| WireError::Malformed("strategy"))
}

fn enc_command(e: &mut Enc, c: &SubRequestCommand) {
    e.u64(c.start_position);
    e.u64(c.read_length);
    e.u32(c.k);
    e.u32(c.m);
    e.u32(c.agent_count);
    e.u32(c.agent_locations.len() as u32);
    for l in &c.agent_locations {
        e.u32(l.node.0);
        e.str(&l.addr);
    }
    e.u32(c.chunk_indices.len() as u32);
    for &i in &c.chunk_indices {
        e.u32(i);
    }
    e.u32(c.lost_chunk_index);
    e.u8(c.reconstruction_method.code());
    e.u32(c.packet_size);
}

fn dec_command(d: &mut Dec) -> WResult<SubRequestCommand> {
    let start_position = d.u64()?;
    let read_length = d.u64()?;
    let k = d.u32()?;
    let m = d.u32()?;
    let agent_count = d.u32()?;
    let n = d.count(6)?;
    let mut agent_locations = Vec::with_capacity(n);
    for _ in 0..n {
        let node = NodeId(d.u32()?);
        agent_locations.push(AgentLocation { node, addr: d.str()? });
    }
    let n = d.count(4)?;
    let chunk_indices = (0..n).map(|_| d.u32()).collect::<WResult<Vec<_>>>()?;
    Ok(SubRequestCommand {
        start_position,
        read_length,
        k,
        m,
        agent_count,
        agent_locations,
        chunk_indices,
        lost_chunk_index: d.u32()?,
        reconstruction_method: strategy(d.u8()?)?,
        packet_size: d.u32()?,
    })
}

fn enc_envelope(e: &mut Enc, env: &CommandEnvelope) {
    e.u64(env.read_id);
    e.u32(env.stripe);
    e.u32(env.starter.0);
    e.str(&env.starter_addr);
    e.str(&env.requestor_addr);
    enc_command(e, &env.command);
}

fn dec_envelope(d: &mut Dec) -> WResult<CommandEnvelope> {
    Ok(CommandEnvelope {
        read_id: d.u64()?,
        stripe: d.u32()?,
        starter: NodeId(d.u32()?),
        starter_addr: d.str()?,
        requestor_addr: d.str()?,
        command: dec_command(d)?,
    })
}

impl Message {
    pub fn kind(&self) -> MsgType {
        match self {
            Message::ReadReq(_) => MsgType::ReadReq,
            Message::ReadResp(_) => MsgType::ReadResp,
            Message::SubreqCmd(_) => MsgType::SubreqCmd,
            Message::Packet(_) => MsgType::Packet,
            Message::Done { .. } => MsgType::Done,
            Message::Error { .. } => MsgType::Error,
        }
    }

    pub fn to_frame(&self) -> Frame {
        let mut e = Enc(Vec::new());
        match self {
            Message::ReadReq(r) => {
                e.u64(r.read_id);
                e.u32(r.stripe);
                e.u32(r.chunk);
                e.u8(match r.mode {
                    ReadMode::Auto => MODE_AUTO,
                    ReadMode::Degraded(s) => s.code(),
                });
                e.u32(r.max_agents);
                e.str(&r.reply_addr);
            }
            Message::ReadResp(ReadResponse::Redirect { read_id, node, addr }) => {
                e.u8(0);
                e.u64(*read_id);
                e.u32(node.0);
                e.str(addr);
            }
            Message::ReadResp(ReadResponse::Plan(env)) => {
                e.u8(1);
                enc_envelope(&mut e, env);
            }
            Message::ReadResp(ReadResponse::Error(msg)) => {
                e.u8(2);
                e.str(msg);
            }
            Message::SubreqCmd(env) => enc_envelope(&mut e, env),
            Message::Packet(p) => {
                e.u64(p.read_id);
                e.u32(p.key.list);
                e.u32(p.key.packet);
                e.u32(p.key.stage);
                e.bytes(&p.data);
            }
            Message::Done { read_id } => e.u64(*read_id),
            Message::Error { read_id, message } => {
                e.u64(*read_id);
                e.str(message);
            }
        }
        Frame { kind: self.kind(), payload: e.0 }
    }

    /// Like [`Message::from_frame`], reusing the frame buffer for packet
    /// data.
    pub fn from_owned_frame(f: Frame) -> WResult<Message> {
        if f.kind != MsgType::Packet {
            return Message::from_frame(&f);
        }
        let mut d = Dec(&f.payload);
        let read_id = d.u64()?;
        let key = PayloadInfo { list: d.u32()?, packet: d.u32()?, stage: d.u32()? };
        let n = d.u32()? as usize;
        if d.0.len() != n {
            return Err(WireError::Malformed("packet length"));
        }
        let mut data = f.payload;
        data.drain(..24);
        Ok(Message::Packet(PacketFrame { read_id, key, data }))
    }

    pub fn from_frame(f: &Frame) -> WResult<Message> {
        let mut d = Dec(&f.payload);
        let msg = match f.kind {
            MsgType::ReadReq => {
                let read_id = d.u64()?;
                let stripe = d.u32()?;
                let chunk = d.u32()?;
                let mode = match d.u8()? {
                    MODE_AUTO => ReadMode::Auto,
                    c => ReadMode::Degraded(strategy(c)?),
                };
                Message::ReadReq(ReadRequest {
                    read_id,
                    stripe,
                    chunk,
                    mode,
                    max_agents: d.u32()?,
                    reply_addr: d.str()?,
                })
            }
            MsgType::ReadResp => Message::ReadResp(match d.u8()? {
                0 => ReadResponse::Redirect { read_id: d.u64()?, node: NodeId(d.u32()?), addr: d.str()? },
                1 => ReadResponse::Plan(dec_envelope(&mut d)?),
                2 => ReadResponse::Error(d.str()?),
                _ => return Err(WireError::Malformed("response kind")),
            }),
            MsgType::SubreqCmd => Message::SubreqCmd(dec_envelope(&mut d)?),
            MsgType::Packet => Message::Packet(PacketFrame {
                read_id: d.u64()?,
                key: PayloadInfo { list: d.u32()?, packet: d.u32()?, stage: d.u32()? },
                data: d.bytes()?,
            }),
            MsgType::Done => Message::Done { read_id: d.u64()? },
            MsgType::Error => Message::Error { read_id: d.u64()?, message: d.str()? },
        };
        d.finish()?;
        Ok(msg)
    }
}

pub fn send<W: Write>(w: &mut W, msg: &Message) -> io::Result<()> {
    write_frame(w, &msg.to_frame())
}

/// Writes a PACKET frame straight from a borrowed payload.
pub fn send_packet<W: Write>(w: &mut W, read_id: u64, key: PayloadInfo, data: &[u8]) -> io::Result<()> {
    let mut head = Vec::with_capacity(HEADER_LEN + 24 + data.len());
    head.extend_from_slice(&((24 + data.len()) as u32).to_le_bytes());
    head.push(MsgType::Packet as u8);
    head.extend_from_slice(&read_id.to_le_bytes());
    head.extend_from_slice(&key.list.to_le_bytes());
    head.extend_from_slice(&key.packet.to_le_bytes());
    head.extend_from_slice(&key.stage.to_le_bytes());
    head.extend_from_slice(&(data.len() as u32).to_le_bytes());
    head.extend_from_slice(data);
    w.write_all(&head)
}

/// Next message, `Ok(None)` at end of stream.
pub fn recv<R: Read>(r: &mut R) -> WResult<Option<Message>> {
    match read_frame(r)? {
        Some(f) => Message::from_owned_frame(f).map(Some),
        None => Ok(None),
    }
}
