#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

namespace fsnet {

/// Reservoir-sampled store. After n >= capacity insertions every inserted item
/// is present with probability capacity / n. Insertion and sampling draw from
/// separate generators, so contents depend only on the insertion sequence and
/// the seed.
template <typename Item>
class ReplayBuffer {
public:
    ReplayBuffer(std::size_t capacity, std::uint64_t seed)
        : capacity_(capacity), insert_rng_(seed), sample_rng_(seed ^ 0x9e3779b97f4a7c15ull)
    {
        items_.reserve(capacity);
    }

    void insert(Item item)
    {
        ++seen_;
        if (capacity_ == 0)
            return;
        if (items_.size() < capacity_) {
            items_.push_back(std::move(item));
            return;
        }
        std::uniform_int_distribution<std::uint64_t> slot(0, seen_ - 1);
        const std::uint64_t j = slot(insert_rng_);
        if (j < capacity_)
            items_[static_cast<std::size_t>(j)] = std::move(item);
    }

    /// `count` indices drawn uniformly with replacement; empty when the buffer is.
    std::vector<std::size_t> sample_indices(std::size_t count)
    {
        std::vector<std::size_t> out;
        if (items_.empty())
            return out;
        std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
        out.reserve(count);
        for (std::size_t i = 0; i < count; ++i)
            out.push_back(pick(sample_rng_));
        return out;
    }

    const Item& operator[](std::size_t i) const { return items_.at(i); }
    const std::vector<Item>& items() const { return items_; }
    std::size_t size() const { return items_.size(); }
    bool empty() const { return items_.empty(); }
    std::size_t capacity() const { return capacity_; }
    std::uint64_t items_seen() const { return seen_; }

private:
    std::size_t capacity_;
    std::uint64_t seen_ = 0;
    std::vector<Item> items_;
    std::mt19937_64 insert_rng_;
    std::mt19937_64 sample_rng_;
};

} // namespace fsnet
