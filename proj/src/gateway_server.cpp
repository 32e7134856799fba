#include "deskcell/gateway_server.hpp"

#include <deque>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "deskcell/errors.hpp"

namespace deskcell {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

namespace {

std::string mime_type(const std::filesystem::path& p) {
  static const std::map<std::string, std::string> types = {
      {".html", "text/html"},        {".htm", "text/html"},         {".js", "application/javascript"},
      {".mjs", "application/javascript"}, {".css", "text/css"},    {".json", "application/json"},
      {".svg", "image/svg+xml"},     {".png", "image/png"},         {".ico", "image/x-icon"},
      {".map", "application/json"},  {".txt", "text/plain"}};
  const auto it = types.find(p.extension().string());
  return it == types.end() ? "application/octet-stream" : it->second;
}

// Maps a request target onto a file below root; empty when it escapes root.
std::optional<std::filesystem::path> resolve(const std::filesystem::path& root, std::string_view target) {
  std::string path(target.substr(0, target.find('?')));
  if (path.empty() || path[0] != '/') return std::nullopt;
  if (path.back() == '/') path += "index.html";
  const std::filesystem::path rel = std::filesystem::path(path.substr(1)).lexically_normal();
  if (rel.empty() || *rel.begin() == "..") return std::nullopt;
  return root / rel;
}

}  // namespace

struct GatewayServer::Impl : std::enable_shared_from_this<GatewayServer::Impl> {
  class WsSession;
  class HttpSession;

  GatewayCore& core;
  std::filesystem::path root;
  asio::io_context io;
  tcp::acceptor acceptor{io};
  std::thread thread;
  std::map<int, std::weak_ptr<WsSession>> sessions;  // io thread only
  std::vector<std::weak_ptr<HttpSession>> http_sessions;
  bool stopped = false;
  int port = 0;

  Impl(GatewayCore& c, std::filesystem::path r) : core(c), root(std::move(r)) {}

  void accept();
};

class GatewayServer::Impl::WsSession : public std::enable_shared_from_this<WsSession> {
 public:
  WsSession(std::shared_ptr<Impl> server, tcp::socket socket) : server_(std::move(server)), ws_(std::move(socket)) {}

  void start(http::request<http::string_body> req) {
    const std::string target(req.target());
    const bool observer = target.find("role=observer") != std::string::npos;
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    auto self = shared_from_this();
    ws_.async_accept(req, [self, observer](beast::error_code ec) {
      if (ec) return;
      self->id_ = self->server_->core.open(!observer);
      self->server_->sessions[self->id_] = self;
      self->read();
      self->flush();
    });
  }

  void flush() {
    if (closing_) return;
    if (!server_->core.is_open(id_)) {
      shutdown();
      return;
    }
    for (auto& t : server_->core.take(id_)) queue_.push_back(std::move(t));
    write();
  }

  void shutdown() {
    if (closing_) return;
    closing_ = true;
    server_->core.close(id_);
    server_->sessions.erase(id_);
    auto self = shared_from_this();
    ws_.async_close(websocket::close_code::normal, [self](beast::error_code) {});
  }

 private:
  void read() {
    auto self = shared_from_this();
    ws_.async_read(buffer_, [self](beast::error_code ec, std::size_t) {
      if (ec) {
        self->closing_ = true;
        self->server_->core.close(self->id_);
        self->server_->sessions.erase(self->id_);
        return;
      }
      self->server_->core.receive(self->id_, beast::buffers_to_string(self->buffer_.data()));
      self->buffer_.consume(self->buffer_.size());
      self->read();
    });
  }

  void write() {
    if (writing_ || queue_.empty() || closing_) return;
    writing_ = true;
    ws_.text(true);
    auto self = shared_from_this();
    ws_.async_write(asio::buffer(queue_.front()), [self](beast::error_code ec, std::size_t) {
      self->writing_ = false;
      if (ec) return;
      self->queue_.pop_front();
      self->write();
    });
  }

  std::shared_ptr<Impl> server_;
  websocket::stream<beast::tcp_stream> ws_;
  beast::flat_buffer buffer_;
  std::deque<std::string> queue_;
  int id_ = -1;
  bool writing_ = false;
  bool closing_ = false;
};

class GatewayServer::Impl::HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(std::shared_ptr<Impl> server, tcp::socket socket)
      : server_(std::move(server)), stream_(std::move(socket)) {}

  void start() { read(); }
  void close() {
    beast::error_code ec;
    stream_.socket().shutdown(tcp::socket::shutdown_both, ec);
    stream_.close();
  }

 private:
  void read() {
    req_ = {};
    stream_.expires_after(std::chrono::seconds(30));
    auto self = shared_from_this();
    http::async_read(stream_, buffer_, req_, [self](beast::error_code ec, std::size_t) {
      if (ec) return;
      self->route();
    });
  }

  void route() {
    if (websocket::is_upgrade(req_)) {
      const std::string target(req_.target());
      if (target.substr(0, target.find('?')) == "/teleop") {
        stream_.expires_never();
        std::make_shared<WsSession>(server_, stream_.release_socket())->start(std::move(req_));
        return;
      }
      respond(http::status::not_found, "text/plain", "no websocket endpoint here\n");
      return;
    }
    if (req_.method() != http::verb::get && req_.method() != http::verb::head) {
      respond(http::status::method_not_allowed, "text/plain", "method not allowed\n");
      return;
    }
    const auto path = resolve(server_->root, std::string_view(req_.target().data(), req_.target().size()));
    if (!path) {
      respond(http::status::bad_request, "text/plain", "bad path\n");
      return;
    }
    std::ifstream in(*path, std::ios::binary);
    if (!in || std::filesystem::is_directory(*path)) {
      respond(http::status::not_found, "text/plain", "not found\n");
      return;
    }
    std::stringstream ss;
    ss << in.rdbuf();
    respond(http::status::ok, mime_type(*path), ss.str());
  }

  void respond(http::status status, const std::string& type, std::string body) {
    auto res = std::make_shared<http::response<http::string_body>>(status, req_.version());
    res->set(http::field::content_type, type);
    res->keep_alive(req_.keep_alive());
    const auto size = body.size();
    if (req_.method() != http::verb::head) res->body() = std::move(body);
    res->prepare_payload();
    if (req_.method() == http::verb::head) res->content_length(size);
    auto self = shared_from_this();
    http::async_write(stream_, *res, [self, res](beast::error_code ec, std::size_t) {
      if (ec) return;
      if (res->keep_alive()) self->read();
      else self->close();
    });
  }

  std::shared_ptr<Impl> server_;
  beast::tcp_stream stream_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
};

void GatewayServer::Impl::accept() {
  auto self = shared_from_this();
  acceptor.async_accept([self](beast::error_code ec, tcp::socket socket) {
    if (ec) return;
    auto s = std::make_shared<HttpSession>(self, std::move(socket));
    self->http_sessions.push_back(s);
    std::erase_if(self->http_sessions, [](const auto& w) { return w.expired(); });
    s->start();
    self->accept();
  });
}

GatewayServer::GatewayServer(GatewayCore& core, int port, std::filesystem::path static_root, const std::string& address)
    : impl_(std::make_shared<Impl>(core, std::move(static_root))) {
  beast::error_code ec;
  const tcp::endpoint ep(asio::ip::make_address(address, ec), static_cast<unsigned short>(port));
  if (ec) throw StartupError("bad listen address " + address);
  impl_->acceptor.open(ep.protocol(), ec);
  if (!ec) impl_->acceptor.set_option(tcp::acceptor::reuse_address(true), ec);
  if (!ec) impl_->acceptor.bind(ep, ec);
  if (!ec) impl_->acceptor.listen(asio::socket_base::max_listen_connections, ec);
  if (ec) throw StartupError("cannot listen on port " + std::to_string(port) + ": " + ec.message());

  impl_->port = impl_->acceptor.local_endpoint().port();
  std::weak_ptr<Impl> weak = impl_;
  core.set_notify([weak](int id) {
    auto impl = weak.lock();
    if (!impl) return;
    asio::post(impl->io, [impl, id] {
      const auto it = impl->sessions.find(id);
      if (it == impl->sessions.end()) return;
      if (auto s = it->second.lock()) s->flush();
    });
  });
  impl_->accept();
  impl_->thread = std::thread([impl = impl_] {
    auto guard = asio::make_work_guard(impl->io);
    impl->io.run();
  });
}

GatewayServer::~GatewayServer() { stop(); }

int GatewayServer::port() const { return impl_->port; }

void GatewayServer::stop() {
  if (impl_->stopped) return;
  impl_->stopped = true;
  impl_->core.set_notify({});
  asio::post(impl_->io, [impl = impl_] {
    beast::error_code ec;
    impl->acceptor.close(ec);
    for (auto& [id, w] : impl->sessions)
      if (auto s = w.lock()) impl->core.close(id);
    for (auto& w : impl->http_sessions)
      if (auto s = w.lock()) s->close();
    impl->io.stop();
  });
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace deskcell
