#include "dqa/study_http.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "dqa/error.hpp"

namespace dqa {

using json = nlohmann::json;

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, status, {{"error", message}});
}

template <typename F>
httplib::Server::Handler guarded(F f) {
  return [f](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const SessionExpiredError& e) {
      send_error(res, 423, e.what());
    } catch (const NotFoundError& e) {
      send_error(res, 404, e.what());
    } catch (const ConflictError& e) {
      send_error(res, 409, e.what());
    } catch (const PreconditionError& e) {
      send_error(res, 400, e.what());
    } catch (const ParseError& e) {
      send_error(res, 400, e.what());
    } catch (const json::exception& e) {
      send_error(res, 400, std::string("invalid request body: ") + e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, e.what());
    }
  };
}

json parse_body(const httplib::Request& req, std::initializer_list<const char*> allowed) {
  json body = json::parse(req.body);
  if (!body.is_object()) throw PreconditionError("request body must be a JSON object");
  for (const auto& [key, _] : body.items()) {
    if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }) == allowed.end()) {
      throw PreconditionError("unknown field '" + key + "'");
    }
  }
  return body;
}

json scale_json(const StudyConfig& c) {
  json bands = json::array();
  for (const auto& b : rating_bands(c.scale_min, c.scale_max)) {
    bands.push_back({{"label", b.label}, {"low", b.low}, {"high", b.high}});
  }
  return {{"min", c.scale_min}, {"max", c.scale_max}, {"continuous", true}, {"bands", bands}};
}

json session_json(const SessionInfo& s) {
  return {{"session_id", s.session_id},
          {"study_id", s.study_id},
          {"subject_id", s.subject_id},
          {"elapsed_active_seconds", static_cast<double>(s.elapsed_active.count()) / 1000.0},
          {"completed", s.completed},
          {"remaining", s.remaining}};
}

std::string content_type(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".png") return "image/png";
  if (ext == ".bmp") return "image/bmp";
  if (ext == ".tif" || ext == ".tiff") return "image/tiff";
  return "image/x-portable-anymap";
}

}  // namespace

struct StudyServer::Impl {
  StudyService& service;
  httplib::Server server;
  explicit Impl(StudyService& s) : service(s) {}
};

StudyServer::StudyServer(StudyService& service, std::uint64_t default_seed) : impl_(std::make_unique<Impl>(service)) {
  auto& svc = impl_->service;
  auto& srv = impl_->server;

  srv.Post("/studies", guarded([&svc, default_seed](const httplib::Request& req, httplib::Response& res) {
             const json body =
                 parse_body(req, {"name", "manifest", "session_limit_minutes", "seed", "scale_min", "scale_max"});
             StudyConfig c;
             c.name = body.at("name").get<std::string>();
             c.manifest = body.at("manifest").get<std::string>();
             c.session_limit_minutes = body.value("session_limit_minutes", c.session_limit_minutes);
             c.seed = body.value("seed", default_seed);
             c.scale_min = body.value("scale_min", c.scale_min);
             c.scale_max = body.value("scale_max", c.scale_max);
             const std::string id = svc.create_study(c);
             send_json(res, 201,
                       {{"study_id", id},
                        {"trials_per_subject", svc.trials_per_subject(id)},
                        {"session_limit_minutes", c.session_limit_minutes},
                        {"scale", scale_json(c)}});
           }));

  srv.Post(R"(/studies/([^/]+)/sessions)", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
             const json body = parse_body(req, {"subject_id"});
             const SessionInfo s = svc.open_session(req.matches[1], body.at("subject_id").get<std::string>());
             send_json(res, 201, session_json(s));
           }));

  srv.Get(R"(/sessions/([^/]+)/next)", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
            const std::string id = req.matches[1];
            const NextTrial next = svc.next_trial(id);
            if (!next.trial) {
              send_json(res, 200, {{"status", "complete"}});
              return;
            }
            const auto& t = *next.trial;
            const StudyConfig c = svc.study_config(svc.session(id).study_id);
            send_json(res, 200,
                      {{"status", "trial"},
                       {"trial_id", t.trial_id},
                       {"reference_image", "/images/" + t.reference_token},
                       {"candidate_image", "/images/" + t.candidate_token},
                       {"remaining", t.remaining},
                       {"scale", scale_json(c)}});
          }));

  srv.Post(R"(/sessions/([^/]+)/ratings)", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
             const json body = parse_body(req, {"trial_id", "score"});
             if (!body.at("score").is_number()) throw PreconditionError("score must be a number");
             const std::size_t remaining = svc.submit_rating(req.matches[1], body.at("trial_id").get<std::string>(),
                                                             body.at("score").get<double>());
             send_json(res, 200, {{"accepted", true}, {"remaining", remaining}});
           }));

  srv.Get(R"(/studies/([^/]+)/export)", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
            std::ostringstream out;
            write_raw_scores(out, svc.export_ratings(req.matches[1]));
            res.status = 200;
            res.set_content(out.str(), "text/csv");
          }));

  srv.Get(R"(/images/([0-9a-f]+))", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
            const auto path = svc.image_path(req.matches[1]);
            std::ifstream in(path, std::ios::binary);
            if (!in) throw NotFoundError("image unavailable");
            std::ostringstream bytes;
            bytes << in.rdbuf();
            res.status = 200;
            res.set_content(bytes.str(), content_type(path));
          }));
}

StudyServer::~StudyServer() { stop(); }

int StudyServer::bind(const std::string& host, int port) {
  const int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound <= 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void StudyServer::run() { impl_->server.listen_after_bind(); }

void StudyServer::stop() { impl_->server.stop(); }

void StudyServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace dqa
