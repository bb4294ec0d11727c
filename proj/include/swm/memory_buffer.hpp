#pragma once

#include <deque>
#include <filesystem>
#include <optional>

#include "swm/autodiff.hpp"

namespace swm {

enum class MemoryStream { K, V };

struct MemoryBufferConfig {
    std::int64_t capacity = 4;  // temporal horizon T
    real alpha = 1;             // update gain: stored = alpha*refined + (1-alpha)*raw
    std::int64_t d_inner = 0;   // carried SSM state shape, per stream
    std::int64_t n_state = 0;
};

// Plain-tensor image of the buffer, used at streaming window boundaries
// and for checkpoint dump/load.
struct MemorySnapshot {
    std::vector<Tensor> k_entries, v_entries;  // oldest -> newest
    std::optional<Tensor> k_state, v_state;
};

// Dual-stream FIFO of per-window distilled features plus the carried SSM
// hidden state per stream. Entries live on a tape so gradients can flow
// through stored history within a training step; single-owner, advanced
// by exactly one pipeline stream.
class MemoryBuffer {
public:
    explicit MemoryBuffer(const MemoryBufferConfig& cfg);

    std::int64_t capacity() const { return cfg_.capacity; }
    real alpha() const { return cfg_.alpha; }
    std::int64_t size() const { return static_cast<std::int64_t>(k_entries_.size()); }
    const MemoryBufferConfig& config() const { return cfg_; }

    // Concatenation of kept history with the current feature. When the
    // buffer is full the temporally farthest entry is excluded, so the
    // read-out holds at most capacity-1 history entries plus current.
    // Never mutates the buffer.
    Val read_out(Tape& t, MemoryStream s, Val current) const;

    // Appends the blended entry and evicts the oldest once past capacity.
    void update(Tape& t, MemoryStream s, Val refined, Val raw);

    // Replace both carried SSM states (shape-checked against config).
    void propagate(const Tape& t, Val new_k_state, Val new_v_state);

    // Streams emptied, states zeroed; capacity and alpha unchanged.
    void reset();

    // Carried state for a stream; zeros until the first propagate.
    Val state(Tape& t, MemoryStream s);

    // Retained footprint in bytes: entries + carried states.
    std::size_t retained_bytes(const Tape& t) const;

    // Move the live values onto a fresh tape (window boundary in
    // streaming mode, where the previous window's tape is dropped).
    void rebind(const Tape& old_tape, Tape& fresh);

    MemorySnapshot snapshot(const Tape& t) const;
    void restore(Tape& t, const MemorySnapshot& snap);

private:
    const std::deque<Val>& entries(MemoryStream s) const {
        return s == MemoryStream::K ? k_entries_ : v_entries_;
    }
    std::deque<Val>& entries(MemoryStream s) {
        return s == MemoryStream::K ? k_entries_ : v_entries_;
    }

    MemoryBufferConfig cfg_;
    std::deque<Val> k_entries_, v_entries_;
    std::optional<Val> k_state_, v_state_;
};

// Checkpoint helpers (binary container + JSON sidecar).
void save_snapshot(const std::filesystem::path& bin_path,
                   const std::filesystem::path& manifest_path, const MemorySnapshot& snap);
MemorySnapshot load_snapshot(const std::filesystem::path& bin_path,
                             const std::filesystem::path& manifest_path);

}  // namespace swm
