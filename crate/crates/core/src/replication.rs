//! The AppendEntries pipeline, identical for both protocols.

use crate::message::{AppendEntriesReq, AppendEntriesResp, Effect, Message, TimerKind};
use crate::node::{Effects, Node, NodeFault, RoleState};
use crate::types::{LogEntry, LogIndex, Operation, ServerId};

impl Node {
    /// Receiver side of AppendEntries.
    pub fn handle_append_entries(
        &mut self,
        from: ServerId,
        req: AppendEntriesReq,
        out: &mut Effects,
    ) -> Result<AppendEntriesResp, NodeFault> {
        self.observe_term(req.term, out);
        let me = self.id();
        let st = &mut self.state;
        let reject = AppendEntriesResp {
            term: st.current_term,
            success: false,
            last_appended: 0,
        };
        // 1. stale leader
        if req.term < st.current_term {
            return Ok(reject);
        }
        if !matches!(st.role, RoleState::Follower) {
            return Err(NodeFault::ConflictingLeader {
                server: me,
                from,
                term: req.term,
            });
        }
        // Heard from the current leader, whatever the log check says.
        out.push(Effect::ResetTimer(TimerKind::Election));

        // 2. prefix must match
        if st.log.term_at(req.prev_log_index) != Some(req.prev_log_term) {
            return Ok(reject);
        }

        // 3 + 4. drop conflicting suffix, append what is missing
        for (k, entry) in req.entries.iter().enumerate() {
            let index = req.prev_log_index + 1 + k as LogIndex;
            match st.log.get(index) {
                Some(existing) if existing.term == entry.term => {}
                Some(_) => {
                    st.log.truncate(index - 1);
                    st.log.push(*entry);
                }
                None => st.log.push(*entry),
            }
        }

        // 5. commit index never moves backwards
        let last_new = req.prev_log_index + req.entries.len() as LogIndex;
        if req.leader_commit > st.commit_index {
            st.commit_index = st.commit_index.max(req.leader_commit.min(last_new));
        }
        self.apply_committed(out)?;

        Ok(AppendEntriesResp {
            term: self.state.current_term,
            success: true,
            last_appended: last_new,
        })
    }

    /// Emit `Apply` for every index in `(lastApplied, commitIndex]`.
    pub fn apply_committed(&mut self, out: &mut Effects) -> Result<(), NodeFault> {
        let st = &mut self.state;
        if st.commit_index <= st.last_applied {
            return Ok(());
        }
        if st.commit_index > st.log.len() {
            return Err(NodeFault::CommitBeyondLog {
                server: self.config.id,
                commit_index: st.commit_index,
                log_len: st.log.len(),
            });
        }
        for index in st.last_applied + 1..=st.commit_index {
            let entry = *st.log.get(index).expect("bounds checked above");
            out.push(Effect::Apply { index, entry });
        }
        st.last_applied = st.commit_index;
        Ok(())
    }

    /// Build the AppendEntries request for `peer` from its `nextIndex`.
    pub fn append_entries_for(&self, peer: ServerId) -> Option<AppendEntriesReq> {
        let RoleState::Leader(ls) = &self.state.role else {
            return None;
        };
        let log = &self.state.log;
        let next = ls.next_index[peer].clamp(1, log.len() + 1);
        let prev = next - 1;
        let mut entries = log.suffix(next).to_vec();
        if let Some(cap) = self.config.batch_cap {
            entries.truncate(cap);
        }
        Some(AppendEntriesReq {
            term: self.state.current_term,
            leader_id: self.id(),
            prev_log_index: prev,
            prev_log_term: log.term_at(prev).expect("prev is within the log"),
            entries,
            leader_commit: self.state.commit_index,
        })
    }

    fn send_append_entries(&self, peer: ServerId, out: &mut Effects) {
        if let Some(req) = self.append_entries_for(peer) {
            out.push(Effect::Send {
                to: peer,
                msg: Message::AppendEntries(req),
            });
        }
    }

    /// Heartbeat and retransmission: one request to every peer.
    pub fn leader_tick(&self, out: &mut Effects) {
        for peer in self.config.cluster.peers(self.id()) {
            self.send_append_entries(peer, out);
        }
    }

    pub fn handle_append_entries_response(
        &mut self,
        from: ServerId,
        resp: AppendEntriesResp,
        out: &mut Effects,
    ) -> Result<(), NodeFault> {
        if self.observe_term(resp.term, out) {
            return Ok(());
        }
        // Responses for an earlier term are stale.
        if resp.term < self.state.current_term {
            return Ok(());
        }
        let RoleState::Leader(ls) = &mut self.state.role else {
            return Ok(());
        };
        if resp.success {
            ls.next_index[from] = resp.last_appended + 1;
            ls.match_index[from] = ls.match_index[from].max(resp.last_appended);
            self.advance_commit(out)
        } else {
            ls.next_index[from] = ls.next_index[from].saturating_sub(1).max(1);
            self.send_append_entries(from, out);
            Ok(())
        }
    }

    pub fn handle_client_request(&mut self, op: Operation, out: &mut Effects) -> Result<(), NodeFault> {
        let term = self.state.current_term;
        let me = self.id();
        let len = {
            let RoleState::Leader(ls) = &mut self.state.role else {
                out.push(Effect::NotLeader(op));
                return Ok(());
            };
            self.state.log.push(LogEntry::new(op, term));
            let len = self.state.log.len();
            ls.match_index[me] = len;
            len
        };
        debug_assert!(len > 0);
        self.leader_tick(out);
        self.advance_commit(out)
    }
}
