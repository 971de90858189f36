//! Rank communication layer.
//!
//! Ranks are worker threads inside one process. Each ordered pair of ranks
//! owns a FIFO channel, so communication is explicit message passing and the
//! only synchronization points are the collective calls. All collectives are
//! deterministic: reductions always combine rank partials in rank order.

use crossbeam_channel::{unbounded, Receiver, Sender};
use std::sync::Arc;

use crate::error::CommError;

/// Payload tag, checked on receive so that mismatched collective sequences
/// fail loudly instead of silently exchanging the wrong buffers.
pub type Tag = u32;

pub const TAG_HALO_X: Tag = 1;
pub const TAG_HALO_Y: Tag = 2;
pub const TAG_REDUCE: Tag = 3;
pub const TAG_BCAST: Tag = 4;
pub const TAG_GATHER: Tag = 5;

struct Message {
    tag: Tag,
    data: Vec<f64>,
}

/// Per-rank endpoint of the cluster mesh. `senders[d]` transmits to rank `d`,
/// `receivers[s]` yields messages sent by rank `s`.
pub struct Communicator {
    rank: usize,
    size: usize,
    senders: Vec<Sender<Message>>,
    receivers: Vec<Receiver<Message>>,
}

impl Communicator {
    /// Build the fully-connected channel mesh for `size` ranks.
    pub fn cluster(size: usize) -> Vec<Communicator> {
        assert!(size >= 1);
        // channels[s][d] is the wire from s to d
        let mut tx: Vec<Vec<Option<Sender<Message>>>> = (0..size)
            .map(|_| (0..size).map(|_| None).collect())
            .collect();
        let mut rx: Vec<Vec<Option<Receiver<Message>>>> = (0..size)
            .map(|_| (0..size).map(|_| None).collect())
            .collect();
        for s in 0..size {
            for d in 0..size {
                let (t, r) = unbounded();
                tx[s][d] = Some(t);
                rx[s][d] = Some(r);
            }
        }
        let mut out = Vec::with_capacity(size);
        for rank in 0..size {
            let senders = (0..size)
                .map(|d| tx[rank][d].take().unwrap())
                .collect::<Vec<_>>();
            let receivers = (0..size)
                .map(|s| rx[s][rank].take().unwrap())
                .collect::<Vec<_>>();
            out.push(Communicator {
                rank,
                size,
                senders,
                receivers,
            });
        }
        out
    }

    /// Single-rank communicator; every collective degenerates to a local op.
    pub fn solo() -> Communicator {
        Communicator::cluster(1).pop().unwrap()
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn send(&self, to: usize, tag: Tag, data: Vec<f64>) {
        self.senders[to]
            .send(Message { tag, data })
            .expect("peer rank hung up");
    }

    pub fn recv(&self, from: usize, tag: Tag) -> Result<Vec<f64>, CommError> {
        let msg = self.receivers[from].recv().expect("peer rank hung up");
        if msg.tag != tag {
            return Err(CommError::TagMismatch {
                expected: tag,
                got: msg.tag,
                from,
            });
        }
        Ok(msg.data)
    }

    /// Exchange buffers with a neighbor: send `out`, receive the counterpart.
    pub fn sendrecv(&self, peer: usize, tag: Tag, out: Vec<f64>) -> Result<Vec<f64>, CommError> {
        if peer == self.rank {
            return Ok(out);
        }
        self.send(peer, tag, out);
        self.recv(peer, tag)
    }

    /// Deterministic all-reduce: rank 0 combines partials in rank order with
    /// compensated accumulation, then broadcasts the result.
    pub fn allreduce(&self, local: &[f64], op: ReduceOp) -> Vec<f64> {
        if self.size == 1 {
            return local.to_vec();
        }
        if self.rank == 0 {
            let mut acc: Vec<Kahan> = local.iter().map(|&v| Kahan::from(v)).collect();
            let mut maxacc: Vec<f64> = local.to_vec();
            for src in 1..self.size {
                let part = self
                    .recv(src, TAG_REDUCE)
                    .expect("reduce sequence mismatch");
                assert_eq!(part.len(), local.len(), "reduce length mismatch");
                match op {
                    ReduceOp::Sum => {
                        for (a, &v) in acc.iter_mut().zip(part.iter()) {
                            a.add(v);
                        }
                    }
                    ReduceOp::Max => {
                        for (m, &v) in maxacc.iter_mut().zip(part.iter()) {
                            if v > *m {
                                *m = v;
                            }
                        }
                    }
                    ReduceOp::Min => {
                        for (m, &v) in maxacc.iter_mut().zip(part.iter()) {
                            if v < *m {
                                *m = v;
                            }
                        }
                    }
                }
            }
            let result: Vec<f64> = match op {
                ReduceOp::Sum => acc.iter().map(|k| k.value()).collect(),
                ReduceOp::Max | ReduceOp::Min => maxacc,
            };
            for dst in 1..self.size {
                self.send(dst, TAG_BCAST, result.clone());
            }
            result
        } else {
            self.send(0, TAG_REDUCE, local.to_vec());
            self.recv(0, TAG_BCAST).expect("bcast sequence mismatch")
        }
    }

    pub fn allreduce_scalar(&self, v: f64, op: ReduceOp) -> f64 {
        self.allreduce(&[v], op)[0]
    }

    /// Gather variable-size blocks on rank 0 (rank order). Non-root ranks get
    /// an empty vector back.
    pub fn gather(&self, local: Vec<f64>) -> Vec<Vec<f64>> {
        if self.size == 1 {
            return vec![local];
        }
        if self.rank == 0 {
            let mut blocks = Vec::with_capacity(self.size);
            blocks.push(local);
            for src in 1..self.size {
                blocks.push(self.recv(src, TAG_GATHER).expect("gather mismatch"));
            }
            blocks
        } else {
            self.send(0, TAG_GATHER, local);
            Vec::new()
        }
    }

    pub fn barrier(&self) {
        self.allreduce_scalar(0.0, ReduceOp::Sum);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceOp {
    Sum,
    Max,
    Min,
}

/// Neumaier compensated accumulator. Keeps rank-partial sums accurate enough
/// that regrouping across decompositions does not move the rounded result.
#[derive(Debug, Clone, Copy, Default)]
pub struct Kahan {
    sum: f64,
    comp: f64,
}

impl Kahan {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from(v: f64) -> Self {
        Kahan { sum: v, comp: 0.0 }
    }

    #[inline]
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Compensated sum of a slice.
pub fn ksum(values: impl Iterator<Item = f64>) -> f64 {
    let mut k = Kahan::new();
    for v in values {
        k.add(v);
    }
    k.value()
}

/// Run `f` on `ranks` worker threads wired into one cluster, returning each
/// rank's result in rank order. This is the in-process launcher that hands
/// every worker its rank identity.
pub fn run_on_ranks<T, F>(ranks: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(Communicator) -> T + Sync + Send,
{
    let comms = Communicator::cluster(ranks);
    let f = Arc::new(f);
    std::thread::scope(|scope| {
        let mut handles = Vec::with_capacity(ranks);
        for comm in comms {
            let f = Arc::clone(&f);
            handles.push(scope.spawn(move || f(comm)));
        }
        handles
            .into_iter()
            .map(|h| h.join().expect("rank thread panicked"))
            .collect()
    })
}
