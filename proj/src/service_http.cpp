// SPDX-License-Identifier: Apache-2.0
#include <httplib.h>

#include "hmt/service.hpp"

namespace hmt {

struct HttpServer::Impl {
  httplib::Server server;
};

HttpServer::HttpServer(ReviewService& service, const ServeConfig& config)
    : impl_(std::make_unique<Impl>()), config_(config) {
  const std::size_t threads = config.threads;
  impl_->server.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
  auto route = [&service](const httplib::Request& req, httplib::Response& res) {
    std::map<std::string, std::string> query(req.params.begin(), req.params.end());
    const ServiceResponse r = service.handle(req.method, req.path, query, req.body);
    res.status = r.status;
    if (r.content_type == "application/json") {
      res.set_content(r.body.dump() + "\n", "application/json");
    } else {
      res.set_content(r.text, r.content_type);
    }
  };
  impl_->server.Get(".*", route);
  impl_->server.Post(".*", route);
}

HttpServer::~HttpServer() { stop(); }

bool HttpServer::bind() {
  if (bound_port_ > 0) return true;
  if (config_.port == 0) {
    bound_port_ = impl_->server.bind_to_any_port(config_.host);
    if (bound_port_ <= 0) return false;
  } else {
    if (!impl_->server.bind_to_port(config_.host, config_.port)) return false;
    bound_port_ = config_.port;
  }
  return true;
}

bool HttpServer::listen() {
  if (!bind()) return false;
  return impl_->server.listen_after_bind();
}

void HttpServer::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace hmt
