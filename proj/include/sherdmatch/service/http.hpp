/* Copyright (c) 2026 The sherdmatch Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License. */
#pragma once

// catalog.hpp (Eigen) must come first: <resolv.h> from httplib defines _res.
#include "sherdmatch/service/catalog.hpp"

#include <httplib.h>

#include <string>

namespace sherdmatch::service {

/// Routes the catalog onto an httplib server; CORS is open to `origin`.
inline void bind_routes(httplib::Server& srv, Catalog& cat, const std::string& origin = "*") {
  const auto send = [](httplib::Response& res, const Response& r) {
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  };
  srv.set_default_headers({{"Access-Control-Allow-Origin", origin},
                           {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                           {"Access-Control-Allow-Headers", "Content-Type"}});
  srv.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  srv.Get("/api/dendrogram", [&, send](const httplib::Request&, httplib::Response& res) { send(res, cat.dendrogram()); });
  srv.Get("/api/seeds", [&, send](const httplib::Request&, httplib::Response& res) { send(res, cat.seeds()); });
  srv.Get(R"(/api/seeds/([^/]+))", [&, send](const httplib::Request& req, httplib::Response& res) {
    send(res, cat.seed(req.matches[1]));
  });
  srv.Post(R"(/api/seeds/([^/]+)/verdict)", [&, send](const httplib::Request& req, httplib::Response& res) {
    send(res, cat.post_verdict(req.matches[1], req.body));
  });
  srv.Get(R"(/api/profiles/([^/]+)/image)", [&, send](const httplib::Request& req, httplib::Response& res) {
    send(res, cat.profile_image(req.matches[1]));
  });
  srv.Get(R"(/api/profiles/([^/]+)/reconstruction)", [&, send](const httplib::Request& req, httplib::Response& res) {
    send(res, cat.reconstruction(req.matches[1]));
  });
  srv.Get("/api/stats", [&, send](const httplib::Request&, httplib::Response& res) { send(res, cat.stats()); });
  srv.Get("/api/health", [&, send](const httplib::Request&, httplib::Response& res) { send(res, cat.health()); });
  srv.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) {
      res.set_content(canonical_dump({{"error", "not found"}, {"status", res.status}}), "application/json");
    }
  });
}

}  // namespace sherdmatch::service
