//! Message vocabulary shared by every component in a simulated platform.

use crate::accel::AccelMsg;
use crate::host::{CpuMsg, DispatchMsg};
use crate::memmodel::{MemRequest, MemResponse};

#[derive(Debug)]
pub enum Msg {
    MemRequest(MemRequest),
    MemResponse(MemResponse),
    /// Private wakeup of the memory manager, keyed by request token.
    MemWake(u64),
    Accel(AccelMsg),
    Cpu(CpuMsg),
    Dispatch(DispatchMsg),
}

pub type Kernel = crate::simkernel::Kernel<Msg>;
pub type Context = crate::simkernel::Context<Msg>;
