#pragma once

// Websocket front end. One simulation thread owns the workspace and ticks it
// in real time; one I/O thread runs every connection. Commands reach the
// simulation through a mailbox drained at tick boundaries, so they apply in
// arrival order. Acks and events are queued reliably per connection; state
// snapshots go through a depth-1 slot where a newer snapshot replaces an
// unsent one.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <deque>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "workbench/protocol.hpp"

namespace workbench {

struct ServerOptions {
  std::string host = "127.0.0.1";
  unsigned short port = 8765;  // 0 picks a free port
  double broadcast_hz = 60.0;
};

/// Parses "host:port" (port may be 0).
inline std::pair<std::string, unsigned short> parse_address(std::string_view text) {
  const auto colon = text.rfind(':');
  if (colon == std::string_view::npos || colon == 0 || colon + 1 == text.size())
    throw Error(ErrorCode::ValidationError, "address must look like host:port");
  const std::string port_text(text.substr(colon + 1));
  char* end = nullptr;
  const long port = std::strtol(port_text.c_str(), &end, 10);
  if (*end != '\0' || port < 0 || port > 65535) throw Error(ErrorCode::ValidationError, "bad port '" + port_text + "'");
  return {std::string(text.substr(0, colon)), static_cast<unsigned short>(port)};
}

/// Outgoing queue of one connection: reliable messages first, in order,
/// then the most recent snapshot if one is waiting.
class Outbox {
 public:
  using Message = std::shared_ptr<const std::string>;

  void push_reliable(Message m) { reliable_.push_back(std::move(m)); }
  void offer_snapshot(Message m) { snapshot_ = std::move(m); }

  Message next() {
    if (!reliable_.empty()) {
      Message m = std::move(reliable_.front());
      reliable_.pop_front();
      return m;
    }
    return std::exchange(snapshot_, nullptr);
  }

  bool empty() const { return reliable_.empty() && !snapshot_; }

 private:
  std::deque<Message> reliable_;
  Message snapshot_;
};

class Server {
  using tcp = boost::asio::ip::tcp;
  using WsStream = boost::beast::websocket::stream<tcp::socket>;

  class Session : public std::enable_shared_from_this<Session> {
   public:
    Session(Server& server, tcp::socket socket) : server_(server), ws_(std::move(socket)) {}

    void start() {
      ws_.text(true);
      ws_.async_accept([self = shared_from_this()](boost::beast::error_code ec) {
        if (ec) return;
        self->read();
      });
    }

    /// Thread-safe; the message is queued on the I/O thread.
    void send(Outbox::Message m, bool reliable) {
      boost::asio::post(ws_.get_executor(), [self = shared_from_this(), m = std::move(m), reliable]() mutable {
        if (reliable) {
          self->outbox_.push_reliable(std::move(m));
        } else {
          self->outbox_.offer_snapshot(std::move(m));
        }
        self->pump();
      });
    }

    bool subscribed = false;  // touched only by the simulation thread

   private:
    void read() {
      ws_.async_read(buffer_, [self = shared_from_this()](boost::beast::error_code ec, std::size_t) {
        if (ec) return;
        const std::string text = boost::beast::buffers_to_string(self->buffer_.data());
        self->buffer_.consume(self->buffer_.size());
        auto parsed = parse_frame(text, self->conn_);
        if (auto* reply = std::get_if<json>(&parsed)) {
          // Errors without an id skip the mailbox; those with one keep ack order.
          if (reply->value("type", "") == "error") {
            self->outbox_.push_reliable(std::make_shared<const std::string>(reply->dump()));
            self->pump();
          } else {
            self->server_.enqueue(self, std::move(*reply));
          }
        } else {
          self->server_.enqueue(self, std::move(std::get<Envelope>(parsed)));
        }
        self->read();
      });
    }

    void pump() {
      if (writing_) return;
      in_flight_ = outbox_.next();
      if (!in_flight_) return;
      writing_ = true;
      ws_.async_write(boost::asio::buffer(*in_flight_),
                      [self = shared_from_this()](boost::beast::error_code ec, std::size_t) {
                        self->writing_ = false;
                        self->in_flight_.reset();
                        if (!ec) self->pump();
                      });
    }

    Server& server_;
    WsStream ws_;
    boost::beast::flat_buffer buffer_;
    Connection conn_;
    Outbox outbox_;
    Outbox::Message in_flight_;
    bool writing_ = false;
  };

  struct Mail {
    std::weak_ptr<Session> from;
    std::variant<Envelope, json> item;  // json: a ready reply
  };

 public:
  Server(Workspace ws, ArtifactStore store, ServerOptions opts = {})
      : ws_(std::move(ws)), store_(std::move(store)), processor_(ws_, store_), opts_(std::move(opts)), acceptor_(ioc_) {
    if (!(opts_.broadcast_hz > 0.0)) throw Error(ErrorCode::ValidationError, "broadcast_hz must be positive");
    boost::system::error_code ec;
    const auto addr = boost::asio::ip::make_address(opts_.host, ec);
    if (ec) throw Error(ErrorCode::BindFailure, "bad bind address '" + opts_.host + "'");
    const tcp::endpoint endpoint(addr, opts_.port);
    acceptor_.open(endpoint.protocol(), ec);
    if (!ec) acceptor_.set_option(tcp::acceptor::reuse_address(true), ec);
    if (!ec) acceptor_.bind(endpoint, ec);
    if (!ec) acceptor_.listen(boost::asio::socket_base::max_listen_connections, ec);
    if (ec)
      throw Error(ErrorCode::BindFailure,
                  "cannot listen on " + opts_.host + ":" + std::to_string(opts_.port) + ": " + ec.message());
    port_ = acceptor_.local_endpoint().port();
    accept();
    io_thread_ = std::thread([this] { ioc_.run(); });
    sim_thread_ = std::thread([this] { simulate(); });
  }

  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  ~Server() { stop(); }

  unsigned short port() const { return port_; }

  void stop() {
    if (stopping_.exchange(true)) return;
    {
      std::lock_guard lock(stop_mutex_);
      stop_cv_.notify_all();
    }
    if (sim_thread_.joinable()) sim_thread_.join();
    // Sockets close when the pending handlers holding the sessions are destroyed.
    ioc_.stop();
    if (io_thread_.joinable()) io_thread_.join();
    boost::system::error_code ec;
    acceptor_.close(ec);
  }

  /// Blocks until stop() is called from another thread.
  void wait() {
    std::unique_lock lock(stop_mutex_);
    stop_cv_.wait(lock, [this] { return stopping_.load(); });
  }

 private:
  void accept() {
    acceptor_.async_accept([this](boost::system::error_code ec, tcp::socket socket) {
      if (ec) return;
      auto session = std::make_shared<Session>(*this, std::move(socket));
      {
        std::lock_guard lock(sessions_mutex_);
        sessions_.push_back(session);
      }
      session->start();
      accept();
    });
  }

  void enqueue(const std::shared_ptr<Session>& from, std::variant<Envelope, json> item) {
    std::lock_guard lock(mailbox_mutex_);
    mailbox_.push_back({from, std::move(item)});
  }

  std::vector<std::shared_ptr<Session>> live_sessions() {
    std::lock_guard lock(sessions_mutex_);
    std::vector<std::shared_ptr<Session>> out;
    std::erase_if(sessions_, [&](const std::weak_ptr<Session>& w) {
      auto s = w.lock();
      if (!s) return true;
      out.push_back(std::move(s));
      return false;
    });
    return out;
  }

  static Outbox::Message message(const json& j) { return std::make_shared<const std::string>(j.dump()); }

  void apply_mailbox() {
    std::deque<Mail> batch;
    {
      std::lock_guard lock(mailbox_mutex_);
      batch.swap(mailbox_);
    }
    for (auto& mail : batch) {
      auto session = mail.from.lock();
      if (!session) continue;
      if (auto* reply = std::get_if<json>(&mail.item)) {
        session->send(message(*reply), true);
        continue;
      }
      const Envelope& env = std::get<Envelope>(mail.item);
      if (env.type == "subscribe" || env.type == "unsubscribe") {
        session->subscribed = env.type == "subscribe";
        session->send(message(ack_ok(env.id)), true);
        if (session->subscribed) session->send(message(snapshot_to_json(ws_.snapshot())), false);
        continue;
      }
      session->send(message(processor_.handle(env)), true);
    }
  }

  void simulate() {
    using clock = std::chrono::steady_clock;
    const auto period = std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(ws_.sim_dt()));
    const double ticks_per_broadcast = 1.0 / (opts_.broadcast_hz * ws_.sim_dt());
    double next_broadcast = 0.0;
    bool halted = false;
    auto deadline = clock::now();
    while (!stopping_.load()) {
      apply_mailbox();
      std::vector<Event> events;
      if (!halted) {
        try {
          events = ws_.tick();
        } catch (const Error& e) {
          halted = true;
          for (const auto& s : live_sessions()) s->send(message(error_frame(e.code(), e.what())), true);
        }
      }
      const auto sessions = live_sessions();
      for (const auto& ev : events) {
        const auto m = message(event_to_json(ev));
        for (const auto& s : sessions)
          if (s->subscribed) s->send(m, true);
      }
      if (static_cast<double>(ws_.tick_count()) >= next_broadcast) {
        next_broadcast += ticks_per_broadcast;
        bool any = false;
        for (const auto& s : sessions) any = any || s->subscribed;
        if (any) {
          const auto m = message(snapshot_to_json(ws_.snapshot()));
          for (const auto& s : sessions)
            if (s->subscribed) s->send(m, false);
        }
      }
      deadline += period;
      const auto now = clock::now();
      if (now > deadline + std::chrono::milliseconds(100)) deadline = now;  // fell behind: do not burst
      std::unique_lock lock(stop_mutex_);
      stop_cv_.wait_until(lock, deadline, [this] { return stopping_.load(); });
    }
  }

  Workspace ws_;
  ArtifactStore store_;
  CommandProcessor processor_;
  ServerOptions opts_;
  boost::asio::io_context ioc_;
  tcp::acceptor acceptor_;
  unsigned short port_ = 0;

  std::mutex mailbox_mutex_;
  std::deque<Mail> mailbox_;
  std::mutex sessions_mutex_;
  std::vector<std::weak_ptr<Session>> sessions_;

  std::atomic<bool> stopping_{false};
  std::mutex stop_mutex_;
  std::condition_variable stop_cv_;
  std::thread io_thread_;
  std::thread sim_thread_;
};

}  // namespace workbench
