#include <chrono>
#include <list>

#include "httplib.h"

#include "camswarm/error.hpp"
#include "camswarm/gateway.hpp"

namespace camswarm::gateway {

namespace {

struct Subscriber {
  std::mutex mu;
  std::condition_variable cv;
  std::deque<std::string> pending;
  bool closed = false;
};

struct PendingCommand {
  json body;
  std::promise<json> reply;
};

int status_for(const json& reply) {
  if (reply.value("ok", false)) return 200;
  const auto code = reply.value("code", std::string());
  if (code == "bad_phase") return 409;
  if (code == "not_authority") return 403;
  return 400;
}

}  // namespace

struct Server::Impl {
  Impl(Session s, ServerOptions o) : session(std::move(s)), opts(o) {}

  Session session;
  ServerOptions opts;
  httplib::Server http;
  std::mutex session_mu;

  std::mutex hub_mu;
  std::string snapshot;  // wire form of the latest snapshot
  std::list<std::shared_ptr<Subscriber>> subscribers;

  std::mutex cmd_mu;
  std::deque<std::shared_ptr<PendingCommand>> commands;

  std::mutex stop_mu;
  std::condition_variable stop_cv;
  std::atomic<bool> stopping{false};
  std::thread loop_thread;
  std::thread http_thread;

  // Caller holds session_mu.
  void publish(const std::optional<json>& event) {
    if (!event) return;
    const auto wire = to_wire(*event);
    const auto snap = to_wire(session.snapshot());
    std::lock_guard hub(hub_mu);
    snapshot = snap;
    for (auto& sub : subscribers) {
      std::lock_guard lk(sub->mu);
      sub->pending.push_back(wire);
      sub->cv.notify_one();
    }
  }

  void loop() {
    using clock = std::chrono::steady_clock;
    const auto wall_start = clock::now();
    SimTime sim_start;
    {
      std::lock_guard lk(session_mu);
      sim_start = session.now();
    }
    while (!stopping) {
      std::deque<std::shared_ptr<PendingCommand>> batch;
      {
        std::lock_guard lk(cmd_mu);
        batch.swap(commands);
      }
      const auto wall = std::chrono::duration_cast<std::chrono::microseconds>(clock::now() - wall_start).count();
      const auto target = sim_start + static_cast<SimTime>(static_cast<double>(wall) * opts.pace);
      {
        std::lock_guard lk(session_mu);
        for (auto& c : batch) {
          auto r = session.command(c->body);
          publish(r.event);
          c->reply.set_value(std::move(r.body));
        }
        try {
          publish(session.advance_to(std::max(target, session.now())));
        } catch (const Error& e) {
          publish(json{{"type", "error"}, {"seq", session.seq()}, {"message", e.what()}});
          stopping = true;
          stop_cv.notify_all();
        }
      }
      std::unique_lock lk(stop_mu);
      stop_cv.wait_for(lk, std::chrono::milliseconds(opts.tick_ms), [&] { return stopping.load(); });
    }
    std::lock_guard lk(cmd_mu);
    for (auto& c : commands) c->reply.set_value(json{{"ok", false}, {"code", "unavailable"}, {"message", "stopping"}});
    commands.clear();
  }

  void routes() {
    http.Get("/api/snapshot", [this](const httplib::Request&, httplib::Response& res) {
      std::lock_guard hub(hub_mu);
      res.set_content(snapshot, "application/json");
    });

    http.Post("/api/command", [this](const httplib::Request& req, httplib::Response& res) {
      json body;
      try {
        body = json::parse(req.body);
      } catch (const json::exception& e) {
        const json err{{"ok", false}, {"code", "bad_command"}, {"message", e.what()}};
        res.status = 400;
        res.set_content(err.dump(), "application/json");
        return;
      }
      if (body.is_object() && !body.contains("client") && req.has_header("X-Camswarm-Client")) {
        body["client"] = req.get_header_value("X-Camswarm-Client");
      }
      auto pc = std::make_shared<PendingCommand>();
      pc->body = std::move(body);
      auto fut = pc->reply.get_future();
      {
        std::lock_guard lk(cmd_mu);
        if (stopping) {
          res.status = 503;
          return;
        }
        commands.push_back(pc);
      }
      const json reply = fut.get();
      res.status = status_for(reply);
      res.set_content(reply.dump(), "application/json");
    });

    http.Get("/api/events", [this](const httplib::Request&, httplib::Response& res) {
      auto sub = std::make_shared<Subscriber>();
      std::string client;
      {
        std::lock_guard lk(session_mu);
        client = session.connect();
        std::lock_guard hub(hub_mu);
        auto first = json::parse(snapshot);
        first["client"] = client;
        sub->pending.push_back(to_wire(first));
        subscribers.push_back(sub);
      }
      res.set_header("Cache-Control", "no-cache");
      res.set_chunked_content_provider(
          "text/event-stream",
          [this, sub](std::size_t, httplib::DataSink& sink) {
            std::deque<std::string> out;
            {
              std::unique_lock lk(sub->mu);
              sub->cv.wait_for(lk, std::chrono::milliseconds(500),
                               [&] { return !sub->pending.empty() || sub->closed || stopping; });
              out.swap(sub->pending);
            }
            if (out.empty()) {
              const std::string ka = ": keepalive\n\n";
              if (!sink.write(ka.data(), ka.size())) return false;
            }
            for (const auto& msg : out) {
              const auto frame = "data: " + msg + "\n\n";
              if (!sink.write(frame.data(), frame.size())) return false;
            }
            if (stopping || sub->closed) {
              sink.done();
              return false;
            }
            return true;
          },
          [this, sub](bool) {
            std::lock_guard hub(hub_mu);
            subscribers.remove(sub);
          });
    });
  }
};

Server::Server(Session session, ServerOptions opts) : impl_(std::make_unique<Impl>(std::move(session), opts)) {
  if (!(opts.pace > 0) || opts.tick_ms <= 0) throw Error(ErrorCode::Validation, "pace and tick must be positive");
}

Server::~Server() { stop(); }

void Server::start() {
  auto& im = *impl_;
  im.snapshot = to_wire(im.session.snapshot());
  im.routes();
  if (im.opts.port == 0) {
    port_ = im.http.bind_to_any_port(im.opts.host);
  } else {
    port_ = im.http.bind_to_port(im.opts.host, im.opts.port) ? im.opts.port : -1;
  }
  if (port_ <= 0) throw Error(ErrorCode::Sim, "cannot bind " + im.opts.host + ":" + std::to_string(im.opts.port));
  im.http_thread = std::thread([&im] { im.http.listen_after_bind(); });
  im.loop_thread = std::thread([&im] { im.loop(); });
}

void Server::stop() {
  auto& im = *impl_;
  {
    std::lock_guard lk(im.stop_mu);
    im.stopping = true;
  }
  im.stop_cv.notify_all();
  {
    std::lock_guard hub(im.hub_mu);
    for (auto& sub : im.subscribers) {
      std::lock_guard lk(sub->mu);
      sub->closed = true;
      sub->cv.notify_all();
    }
  }
  if (im.loop_thread.joinable()) im.loop_thread.join();
  im.http.stop();
  if (im.http_thread.joinable()) im.http_thread.join();
}

bool Server::stopped() const { return impl_->stopping.load(); }

void Server::wait() {
  auto& im = *impl_;
  std::unique_lock lk(im.stop_mu);
  im.stop_cv.wait(lk, [&] { return im.stopping.load(); });
}

}  // namespace camswarm::gateway
