#include "deskcell/channel.hpp"

namespace deskcell {

struct PipeEnd::Shared {
  std::mutex m;
  std::condition_variable cv;
  std::vector<std::uint8_t> inbox[2];
  bool closed = false;
};

void PipeEnd::write(std::span<const std::uint8_t> bytes) {
  std::lock_guard lock(shared_->m);
  if (shared_->closed) return;
  auto& peer = shared_->inbox[1 - side_];
  peer.insert(peer.end(), bytes.begin(), bytes.end());
  shared_->cv.notify_all();
}

std::vector<std::uint8_t> PipeEnd::read_available() {
  std::lock_guard lock(shared_->m);
  return std::exchange(shared_->inbox[side_], {});
}

std::vector<std::uint8_t> PipeEnd::read_wait(std::chrono::milliseconds timeout) {
  std::unique_lock lock(shared_->m);
  shared_->cv.wait_for(lock, timeout, [&] { return !shared_->inbox[side_].empty() || shared_->closed; });
  return std::exchange(shared_->inbox[side_], {});
}

void PipeEnd::close() {
  std::lock_guard lock(shared_->m);
  shared_->closed = true;
  shared_->cv.notify_all();
}

bool PipeEnd::closed() const {
  std::lock_guard lock(shared_->m);
  return shared_->closed;
}

std::pair<std::shared_ptr<PipeEnd>, std::shared_ptr<PipeEnd>> make_pipe() {
  auto shared = std::make_shared<PipeEnd::Shared>();
  return {std::make_shared<PipeEnd>(shared, 0), std::make_shared<PipeEnd>(shared, 1)};
}

}  // namespace deskcell
