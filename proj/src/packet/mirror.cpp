#include "dstreamon/packet/mirror.hpp"

#include <stdexcept>
#include <thread>

namespace dstreamon::packet {

Mirror::Mirror(std::size_t n_taps, std::size_t capacity) : capacity_(capacity) {
  if (n_taps == 0) throw std::invalid_argument("mirror needs at least one tap");
  if (capacity == 0) throw std::invalid_argument("mirror capacity must be positive");
  for (std::size_t i = 0; i < n_taps; ++i) taps_.push_back(std::unique_ptr<Tap>(new Tap(*this)));
}

void Mirror::push(const PacketRecord& pkt) {
  std::unique_lock lock(mu_);
  if (closed_) throw std::logic_error("push after close");
  space_.wait(lock, [&] {
    for (const auto& t : taps_)
      if (t->connected_ && t->buf_.size() >= capacity_) return false;
    return true;
  });
  for (auto& t : taps_)
    if (t->connected_) t->buf_.push_back(pkt);
  data_.notify_all();
}

void Mirror::close() {
  std::lock_guard lock(mu_);
  closed_ = true;
  data_.notify_all();
}

std::optional<PacketRecord> Mirror::Tap::next() {
  std::unique_lock lock(owner_.mu_);
  owner_.data_.wait(lock, [&] { return !buf_.empty() || owner_.closed_ || !connected_; });
  if (!connected_ || buf_.empty()) return std::nullopt;
  PacketRecord p = buf_.front();
  buf_.pop_front();
  owner_.space_.notify_all();
  return p;
}

void Mirror::Tap::disconnect() {
  std::lock_guard lock(owner_.mu_);
  connected_ = false;
  buf_.clear();
  owner_.space_.notify_all();
  owner_.data_.notify_all();
}

bool Mirror::Tap::connected() const {
  std::lock_guard lock(owner_.mu_);
  return connected_;
}

std::vector<std::vector<PacketRecord>> mirror(std::span<const PacketRecord> input,
                                              std::size_t n_taps, std::size_t capacity) {
  Mirror m(n_taps, capacity);
  std::vector<std::vector<PacketRecord>> out(n_taps);
  std::vector<std::jthread> consumers;
  for (std::size_t i = 0; i < n_taps; ++i)
    consumers.emplace_back([&m, &out, i] {
      while (auto p = m.tap(i).next()) out[i].push_back(*p);
    });
  for (const auto& p : input) m.push(p);
  m.close();
  consumers.clear();
  return out;
}

}  // namespace dstreamon::packet
