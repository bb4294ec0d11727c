#include "swm/memory_buffer.hpp"

#include <string>

#include "swm/serialize.hpp"

namespace swm {

MemoryBuffer::MemoryBuffer(const MemoryBufferConfig& cfg) : cfg_(cfg) {
    if (cfg.capacity < 1) throw ConfigError("memory buffer: capacity must be >= 1");
    if (cfg.alpha < 0 || cfg.alpha > 1) throw ConfigError("memory buffer: alpha must be in [0,1]");
    if (cfg.d_inner < 1 || cfg.n_state < 1) {
        throw ConfigError("memory buffer: SSM state dims must be positive");
    }
}

Val MemoryBuffer::read_out(Tape& t, MemoryStream s, Val current) const {
    const auto& es = entries(s);
    const Tensor& cur = t.value(current);
    if (!es.empty()) {
        const Tensor& first = t.value(es.front());
        if (first.extent(1) != cur.extent(1)) {
            throw ShapeError("memory read_out: feature dim " + std::to_string(cur.extent(1)) +
                             " vs stored " + std::to_string(first.extent(1)));
        }
    }
    if (es.empty()) return current;
    std::vector<Val> parts;
    // full buffer: drop the temporally farthest entry from the read-out
    const std::size_t start = es.size() == static_cast<std::size_t>(cfg_.capacity) ? 1 : 0;
    for (std::size_t i = start; i < es.size(); ++i) parts.push_back(es[i]);
    parts.push_back(current);
    return concat_rows(t, parts);
}

void MemoryBuffer::update(Tape& t, MemoryStream s, Val refined, Val raw) {
    const Tensor& rv = t.value(refined);
    if (!rv.same_shape(t.value(raw))) {
        throw ShapeError("memory update: refined " + shape_str(rv.shape()) + " vs raw " +
                         shape_str(t.value(raw).shape()));
    }
    auto& es = entries(s);
    if (!es.empty() && !t.value(es.back()).same_shape(rv)) {
        throw ShapeError("memory update: entry shape changed from " +
                         shape_str(t.value(es.back()).shape()) + " to " + shape_str(rv.shape()));
    }
    Val entry;
    if (cfg_.alpha == real(1)) {
        entry = refined;
    } else if (cfg_.alpha == real(0)) {
        entry = raw;
    } else {
        entry = add(t, scale(t, refined, cfg_.alpha), scale(t, raw, real(1) - cfg_.alpha));
    }
    es.push_back(entry);
    if (es.size() > static_cast<std::size_t>(cfg_.capacity)) es.pop_front();
}

void MemoryBuffer::propagate(const Tape& t, Val new_k_state, Val new_v_state) {
    const Shape want{cfg_.d_inner, cfg_.n_state};
    for (Val v : {new_k_state, new_v_state}) {
        if (t.value(v).shape() != want) {
            throw StateError("memory propagate: state " + shape_str(t.value(v).shape()) +
                             ", expected " + shape_str(want));
        }
    }
    k_state_ = new_k_state;
    v_state_ = new_v_state;
}

void MemoryBuffer::reset() {
    k_entries_.clear();
    v_entries_.clear();
    k_state_.reset();
    v_state_.reset();
}

Val MemoryBuffer::state(Tape& t, MemoryStream s) {
    auto& slot = s == MemoryStream::K ? k_state_ : v_state_;
    if (!slot) slot = t.put(Tensor::zeros({cfg_.d_inner, cfg_.n_state}));
    return *slot;
}

std::size_t MemoryBuffer::retained_bytes(const Tape& t) const {
    std::size_t bytes = 0;
    for (const auto& es : {k_entries_, v_entries_}) {
        for (Val v : es) bytes += t.value(v).byte_size();
    }
    const std::size_t state_bytes =
        static_cast<std::size_t>(cfg_.d_inner * cfg_.n_state) * sizeof(real);
    bytes += 2 * state_bytes;  // states are carried whether or not set yet
    return bytes;
}

void MemoryBuffer::rebind(const Tape& old_tape, Tape& fresh) {
    for (auto* es : {&k_entries_, &v_entries_}) {
        for (auto& v : *es) v = fresh.put(old_tape.value(v));
    }
    if (k_state_) k_state_ = fresh.put(old_tape.value(*k_state_));
    if (v_state_) v_state_ = fresh.put(old_tape.value(*v_state_));
}

MemorySnapshot MemoryBuffer::snapshot(const Tape& t) const {
    MemorySnapshot snap;
    for (Val v : k_entries_) snap.k_entries.push_back(t.value(v));
    for (Val v : v_entries_) snap.v_entries.push_back(t.value(v));
    if (k_state_) snap.k_state = t.value(*k_state_);
    if (v_state_) snap.v_state = t.value(*v_state_);
    return snap;
}

void MemoryBuffer::restore(Tape& t, const MemorySnapshot& snap) {
    reset();
    if (snap.k_entries.size() != snap.v_entries.size()) {
        throw StateError("memory restore: stream lengths differ");
    }
    if (snap.k_entries.size() > static_cast<std::size_t>(cfg_.capacity)) {
        throw StateError("memory restore: snapshot larger than capacity");
    }
    for (const auto& e : snap.k_entries) k_entries_.push_back(t.put(e));
    for (const auto& e : snap.v_entries) v_entries_.push_back(t.put(e));
    if (snap.k_state) {
        if (snap.k_state->shape() != Shape{cfg_.d_inner, cfg_.n_state}) {
            throw StateError("memory restore: state shape mismatch");
        }
        k_state_ = t.put(*snap.k_state);
    }
    if (snap.v_state) v_state_ = t.put(*snap.v_state);
}

void save_snapshot(const std::filesystem::path& bin_path,
                   const std::filesystem::path& manifest_path, const MemorySnapshot& snap) {
    io::NamedTensors named;
    for (std::size_t i = 0; i < snap.k_entries.size(); ++i) {
        named.emplace_back("memory.k." + std::to_string(i), snap.k_entries[i]);
    }
    for (std::size_t i = 0; i < snap.v_entries.size(); ++i) {
        named.emplace_back("memory.v." + std::to_string(i), snap.v_entries[i]);
    }
    if (snap.k_state) named.emplace_back("memory.k_state", *snap.k_state);
    if (snap.v_state) named.emplace_back("memory.v_state", *snap.v_state);
    io::save_named_tensors(bin_path, manifest_path, named);
}

MemorySnapshot load_snapshot(const std::filesystem::path& bin_path,
                             const std::filesystem::path& manifest_path) {
    MemorySnapshot snap;
    for (auto& [name, tensor] : io::load_named_tensors(bin_path, manifest_path)) {
        if (name == "memory.k_state") {
            snap.k_state = std::move(tensor);
        } else if (name == "memory.v_state") {
            snap.v_state = std::move(tensor);
        } else if (name.rfind("memory.k.", 0) == 0) {
            snap.k_entries.push_back(std::move(tensor));
        } else if (name.rfind("memory.v.", 0) == 0) {
            snap.v_entries.push_back(std::move(tensor));
        }
    }
    return snap;
}

}  // namespace swm
