#include "genie/service/server.hpp"

#include <boost/asio/signal_set.hpp>
#include <boost/asio/steady_timer.hpp>
#include <boost/asio/strand.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <chrono>
#include <deque>
#include <iostream>
#include <mutex>
#include <set>
#include <thread>
#include <vector>

namespace genie::service {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

std::string mime_type(const std::filesystem::path& path) {
  const std::string ext = path.extension().string();
  if (ext == ".html" || ext == ".htm") return "text/html; charset=utf-8";
  if (ext == ".js" || ext == ".mjs") return "text/javascript; charset=utf-8";
  if (ext == ".css") return "text/css; charset=utf-8";
  if (ext == ".json") return "application/json";
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".png") return "image/png";
  if (ext == ".wasm") return "application/wasm";
  if (ext == ".txt") return "text/plain; charset=utf-8";
  return "application/octet-stream";
}

std::optional<std::filesystem::path> resolve_static(const std::filesystem::path& root, const std::string& target) {
  std::string path = target.substr(0, target.find_first_of("?#"));
  if (path.empty() || path[0] != '/') return std::nullopt;
  if (path.back() == '/') path += "index.html";
  std::filesystem::path rel = std::filesystem::path(path.substr(1)).lexically_normal();
  if (rel.empty() || rel.is_absolute() || *rel.begin() == "..") return std::nullopt;
  for (const auto& part : rel)
    if (part == "..") return std::nullopt;
  return root / rel;
}

namespace {

class WsSession;

struct Shared {
  Service& service;
  ServerOptions options;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  std::mutex mutex;
  std::set<std::shared_ptr<WsSession>> sockets;
  bool stopping = false;

  double now_ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  }
};

class WsSession : public std::enable_shared_from_this<WsSession> {
 public:
  WsSession(tcp::socket&& socket, Shared& shared) : ws_(std::move(socket)), shared_(shared) {}

  void start(http::request<http::string_body> req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.binary(false);
    ws_.async_accept(req, beast::bind_front_handler(&WsSession::on_accept, shared_from_this()));
  }

  // Called through the session's strand.
  void shutdown() {
    if (closing_) return;
    for (const auto& m : shared_.service.close_session(session_id_, shared_.now_ms())) enqueue(serialize(m));
    session_id_.clear();
    closing_ = true;
    if (!writing_) close();
  }

  net::any_io_executor executor() { return ws_.get_executor(); }

 private:
  void on_accept(beast::error_code ec) {
    if (ec) return finish();
    read();
  }

  void read() {
    ws_.async_read(buffer_, beast::bind_front_handler(&WsSession::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec) return finish();
    if (closing_) return;
    const std::string text = beast::buffers_to_string(buffer_.data());
    buffer_.consume(buffer_.size());
    for (const auto& m : shared_.service.handle_message(session_id_, text, shared_.now_ms())) enqueue(serialize(m));
    read();
  }

  void enqueue(std::string text) {
    queue_.push_back(std::move(text));
    if (!writing_) write();
  }

  void write() {
    writing_ = true;
    ws_.text(true);
    ws_.async_write(net::buffer(queue_.front()), beast::bind_front_handler(&WsSession::on_write, shared_from_this()));
  }

  void on_write(beast::error_code ec, std::size_t) {
    writing_ = false;
    if (ec) return finish();
    queue_.pop_front();
    if (!queue_.empty()) return write();
    if (closing_) close();
  }

  void close() {
    ws_.async_close(websocket::close_code::going_away,
                    beast::bind_front_handler(&WsSession::on_close, shared_from_this()));
  }

  void on_close(beast::error_code) { finish(); }

  // Connection gone: release anything still held so nothing sticks.
  void finish() {
    if (!session_id_.empty()) {
      shared_.service.close_session(session_id_, shared_.now_ms());
      session_id_.clear();
    }
    std::lock_guard lock(shared_.mutex);
    shared_.sockets.erase(shared_from_this());
  }

  websocket::stream<beast::tcp_stream> ws_;
  Shared& shared_;
  beast::flat_buffer buffer_;
  std::deque<std::string> queue_;
  std::string session_id_;
  bool writing_ = false;
  bool closing_ = false;
};

class HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(tcp::socket&& socket, Shared& shared) : stream_(std::move(socket)), shared_(shared) {}

  void start() { read(); }

 private:
  void read() {
    req_ = {};
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, req_, beast::bind_front_handler(&HttpSession::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec) return close();
    if (websocket::is_upgrade(req_)) {
      auto ws = std::make_shared<WsSession>(stream_.release_socket(), shared_);
      {
        std::lock_guard lock(shared_.mutex);
        if (shared_.stopping) return;
        shared_.sockets.insert(ws);
      }
      ws->start(std::move(req_));
      return;
    }
    respond();
  }

  template <typename Body>
  void send(http::response<Body>&& res) {
    auto sp = std::make_shared<http::response<Body>>(std::move(res));
    sp->keep_alive(req_.keep_alive());
    sp->prepare_payload();
    http::async_write(stream_, *sp, [self = shared_from_this(), sp](beast::error_code ec, std::size_t) {
      if (ec || !sp->keep_alive()) return self->close();
      self->read();
    });
  }

  void text_response(http::status status, const std::string& type, std::string body) {
    http::response<http::string_body> res{status, req_.version()};
    res.set(http::field::content_type, type);
    if (req_.method() != http::verb::head) res.body() = std::move(body);
    send(std::move(res));
  }

  void respond() {
    if (req_.method() != http::verb::get && req_.method() != http::verb::head)
      return text_response(http::status::method_not_allowed, "text/plain", "method not allowed\n");
    const std::string target(req_.target());
    if (target == "/healthz" || target.rfind("/healthz?", 0) == 0)
      return text_response(http::status::ok, "application/json", shared_.service.health().dump() + "\n");
    if (!shared_.options.static_dir) return text_response(http::status::not_found, "text/plain", "not found\n");
    const auto path = resolve_static(*shared_.options.static_dir, target);
    if (!path) return text_response(http::status::bad_request, "text/plain", "bad path\n");
    http::file_body::value_type file;
    beast::error_code ec;
    if (std::filesystem::is_regular_file(*path)) file.open(path->c_str(), beast::file_mode::scan, ec);
    if (!std::filesystem::is_regular_file(*path) || ec)
      return text_response(http::status::not_found, "text/plain", "not found\n");
    http::response<http::file_body> res{std::piecewise_construct, std::make_tuple(std::move(file)),
                                        std::make_tuple(http::status::ok, req_.version())};
    res.set(http::field::content_type, mime_type(*path));
    if (req_.method() == http::verb::head) {
      http::response<http::empty_body> head{http::status::ok, req_.version()};
      head.set(http::field::content_type, mime_type(*path));
      head.content_length(res.body().size());
      head.keep_alive(req_.keep_alive());
      auto sp = std::make_shared<http::response<http::empty_body>>(std::move(head));
      return http::async_write(stream_, *sp, [self = shared_from_this(), sp](beast::error_code ec2, std::size_t) {
        if (ec2 || !sp->keep_alive()) return self->close();
        self->read();
      });
    }
    send(std::move(res));
  }

  void close() {
    beast::error_code ec;
    stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
  }

  beast::tcp_stream stream_;
  Shared& shared_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
};

}  // namespace

struct Server::Impl {
  net::io_context ioc;
  Shared shared;
  tcp::acceptor acceptor;
  net::steady_timer reaper;
  net::signal_set signals;
  std::once_flag stop_once;

  Impl(Service& service, ServerOptions options)
      : ioc(std::max(1, options.threads)),
        shared{service, options},
        acceptor(net::make_strand(ioc)),
        reaper(ioc),
        signals(ioc) {
    const tcp::endpoint endpoint(net::ip::make_address(options.address), options.port);
    acceptor.open(endpoint.protocol());
    acceptor.set_option(net::socket_base::reuse_address(true));
    acceptor.bind(endpoint);
    acceptor.listen(net::socket_base::max_listen_connections);
  }

  void accept() {
    acceptor.async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;  // closed by stop()
      socket.set_option(tcp::no_delay(true));
      std::make_shared<HttpSession>(std::move(socket), shared)->start();
      accept();
    });
  }

  void schedule_reap() {
    reaper.expires_after(std::chrono::duration_cast<std::chrono::steady_clock::duration>(
        std::chrono::duration<double>(shared.options.reap_interval_s)));
    reaper.async_wait([this](beast::error_code ec) {
      if (ec) return;
      for (const auto& id : shared.service.reap_idle(shared.now_ms()))
        std::cerr << "reaped idle session " << id << '\n';
      schedule_reap();
    });
  }

  void begin_stop() {
    std::vector<std::shared_ptr<WsSession>> live;
    {
      std::lock_guard lock(shared.mutex);
      shared.stopping = true;
      live.assign(shared.sockets.begin(), shared.sockets.end());
    }
    beast::error_code ec;
    acceptor.close(ec);
    reaper.cancel();
    signals.cancel();
    for (auto& ws : live) net::post(ws->executor(), [ws] { ws->shutdown(); });
    // anything still open after the grace period is cut off
    auto deadline = std::make_shared<net::steady_timer>(ioc, std::chrono::seconds(3));
    deadline->async_wait([this, deadline](beast::error_code) { ioc.stop(); });
  }
};

Server::Server(Service& service, ServerOptions options) : impl_(std::make_unique<Impl>(service, std::move(options))) {}

Server::~Server() = default;

unsigned short Server::port() const { return impl_->acceptor.local_endpoint().port(); }

void Server::run() {
  impl_->accept();
  impl_->schedule_reap();
  if (impl_->shared.options.handle_signals) {
    impl_->signals.add(SIGINT);
    impl_->signals.add(SIGTERM);
    impl_->signals.async_wait([this](beast::error_code ec, int) {
      if (!ec) stop();
    });
  }
  std::vector<std::thread> extra;
  for (int i = 1; i < impl_->shared.options.threads; ++i) extra.emplace_back([this] { impl_->ioc.run(); });
  impl_->ioc.run();
  for (auto& t : extra) t.join();
}

void Server::stop() {
  std::call_once(impl_->stop_once, [this] { net::post(impl_->ioc, [this] { impl_->begin_stop(); }); });
}

}  // namespace genie::service
