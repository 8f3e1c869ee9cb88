#pragma once

// Replay storage. Frames are interned, so a buffer of 100k transitions over a
// few hundred distinct poses holds only a few hundred images.

#include <cstring>
#include <memory>
#include <optional>
#include <unordered_map>
#include <vector>

#include "sflab/errors.hpp"
#include "sflab/numkit/tensor.hpp"
#include "sflab/rng.hpp"

namespace sflab::agents {

using Frame = std::shared_ptr<const Tensor>;

class FramePool {
public:
    Frame intern(const Tensor& t) {
        std::uint64_t h = fnv1a64(shape_str(t.shape()));
        for (double v : t) {
            std::uint64_t bits;
            std::memcpy(&bits, &v, sizeof bits);
            h = mix64(h ^ bits);
        }
        auto& bucket = frames_[h];
        for (const Frame& f : bucket)
            if (*f == t) return f;
        bucket.push_back(std::make_shared<const Tensor>(t));
        ++count_;
        return bucket.back();
    }
    std::size_t size() const { return count_; }

private:
    std::unordered_map<std::uint64_t, std::vector<Frame>> frames_;
    std::size_t count_ = 0;
};

struct Transition {
    Frame s;
    int a = 0;
    double r = 0.0;
    Frame s_next;
    bool terminal = false;   // goal reached, no bootstrap
    bool truncated = false;  // time limit; bootstraps from s_next
    bool done() const { return terminal || truncated; }
};

// One n-step training item. `ret` sums m discounted rewards, `s_boot` is the
// state m steps ahead and `discount` is gamma^m, or 0 when the chain ended in
// a terminal. The raw one-step fields ride along for the reward-prediction
// and SF-TD losses.
struct Sample {
    Frame s;
    int a = 0;
    double ret = 0.0;
    Frame s_boot;
    double discount = 0.0;
    bool terminal = false;
    int steps = 1;
    double r1 = 0.0;
    Frame s1;
    bool terminal1 = false;
};

struct Batch {
    std::vector<Sample> items;
    std::vector<std::size_t> pairing;  // permutation used by losses that pair states
    std::size_t size() const { return items.size(); }
};

class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
        if (capacity == 0) throw ConfigError("replay buffer capacity must be >= 1");
        ring_.reserve(std::min<std::size_t>(capacity, 1 << 16));
    }

    void store(Transition t) {
        if (ring_.size() < capacity_) {
            ring_.push_back(std::move(t));
        } else {
            ring_[head_] = std::move(t);
            head_ = (head_ + 1) % capacity_;
        }
        ++stored_;
    }

    void clear() {
        ring_.clear();
        head_ = 0;
    }

    std::size_t size() const { return ring_.size(); }
    std::size_t capacity() const { return capacity_; }
    long total_stored() const { return stored_; }

    // i = 0 is the oldest transition still held.
    const Transition& at(std::size_t i) const { return ring_[(head_ + i) % ring_.size()]; }

    // n-step item starting at logical index i. The chain stops at a done flag
    // or at the newest stored transition.
    Sample nstep_item(std::size_t i, int nstep, double gamma) const {
        if (i >= size()) throw std::out_of_range("replay index");
        const Transition& first = at(i);
        Sample s;
        s.s = first.s;
        s.a = first.a;
        s.r1 = first.r;
        s.s1 = first.s_next;
        s.terminal1 = first.terminal;
        double g = 1.0;
        int m = 0;
        std::size_t j = i;
        while (true) {
            const Transition& t = at(j);
            s.ret += g * t.r;
            g *= gamma;
            ++m;
            s.s_boot = t.s_next;
            if (t.terminal) {
                s.terminal = true;
                break;
            }
            if (t.truncated || m >= nstep || j + 1 >= size()) break;
            ++j;
        }
        s.steps = m;
        s.discount = s.terminal ? 0.0 : g;
        return s;
    }

    // Uniform with replacement. nullopt is the not-ready signal.
    std::optional<Batch> sample(std::size_t batch_size, int nstep, double gamma, std::size_t min_replay,
                                Rng& rng) const {
        if (size() < std::max<std::size_t>(min_replay, 1)) return std::nullopt;
        Batch b;
        b.items.reserve(batch_size);
        for (std::size_t k = 0; k < batch_size; ++k) b.items.push_back(nstep_item(rng.below(size()), nstep, gamma));
        b.pairing.resize(batch_size);
        for (std::size_t k = 0; k < batch_size; ++k) b.pairing[k] = k;
        rng.shuffle(b.pairing);
        return b;
    }

private:
    std::size_t capacity_;
    std::vector<Transition> ring_;
    std::size_t head_ = 0;
    long stored_ = 0;
};

} // namespace sflab::agents
