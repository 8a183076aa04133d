#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>

#include "sole/errors.hpp"
#include "sole/evalstats.hpp"
#include "sole/features.hpp"
#include "sole/featuretable.hpp"
#include "sole/forest.hpp"
#include "sole/image_io.hpp"
#include "sole/serialize.hpp"
#include "sole/util.hpp"

namespace sole {

struct ServiceConfig {
  std::string host = "0.0.0.0";
  int port = 8080;
  std::string model_dir;       // *.json forest models, id = file stem
  std::string population_dir;  // *.csv feature tables
  std::string static_dir;      // UI bundle served at "/"
  std::uint64_t seed = 0;
  unsigned workers = 1;
  std::size_t queue_limit = 16;  // pending jobs beyond which POST answers 429
  std::size_t max_image_bytes = 20u << 20;
  std::size_t max_cloud_points = 5000;
  int histogram_bins = 30;
  int kde_points = 128;
  PipelineConfig pipeline;

  /// Overrides port, model directory and seed from SOLE_PORT, SOLE_MODEL_DIR
  /// and SOLE_SEED when set.
  void apply_environment() {
    if (const char* v = std::getenv("SOLE_PORT")) port = static_cast<int>(parse_double(v));
    if (const char* v = std::getenv("SOLE_MODEL_DIR")) model_dir = v;
    if (const char* v = std::getenv("SOLE_SEED")) seed = std::stoull(v);
  }

  void validate() const {
    if (port < 0 || port > 65535) throw ConfigError("port must lie in [0, 65535]");
    if (workers < 1) throw ConfigError("the worker pool needs at least one worker");
    if (queue_limit < 1) throw ConfigError("queue limit must be >= 1");
    if (max_cloud_points < 1) throw ConfigError("max cloud points must be >= 1");
    if (histogram_bins < 1 || kde_points < 2) throw ConfigError("bad population summary sizes");
  }
};

/// Attainable range of each feature, used to clip population densities.
inline std::pair<double, double> feature_range(std::string_view name) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  if (name == "SSIM" || name == "NCC") return {-1.0, 1.0};
  if (name == "MSE" || name.rfind("cluster_proportion", 0) == 0 || name.rfind("jaccard", 0) == 0 ||
      name.find("pct_threshold") != std::string_view::npos)
    return {0.0, 1.0};
  if (name.rfind("iterations_k", 0) == 0) return {1.0, inf};
  if (name == "PSR") return {-inf, inf};
  if (name.rfind("wcv_ratio", 0) == 0) return {-inf, 1.0};
  return {0.0, inf};
}

enum class JobStatus { Queued, Aligning, Featurizing, Done, Failed };

inline const char* to_string(JobStatus s) {
  switch (s) {
    case JobStatus::Queued: return "queued";
    case JobStatus::Aligning: return "aligning";
    case JobStatus::Featurizing: return "featurizing";
    case JobStatus::Done: return "done";
    case JobStatus::Failed: return "failed";
  }
  return "";
}

struct ImageRef {
  std::string filename;
  int width = 0, height = 0;
};

/// Snapshot of one pair job.
struct PairJob {
  std::string job_id;
  std::string model_id;
  std::optional<Scenario> scenario;
  ImageRef q, k;
  JobStatus status = JobStatus::Queued;
  std::uint64_t seed = 0;
  std::optional<AlignmentResult> alignment;
  std::optional<FeatureVector> features;
  std::optional<double> posterior;
  std::optional<std::pair<std::string, std::string>> error;  // code, message
  PointCloud q_cloud, k_star;  // downsampled for display
};

inline Json to_json(const PairJob& j) {
  Json out{{"job_id", j.job_id}, {"status", to_string(j.status)}, {"model_id", j.model_id}};
  out["scenario"] = j.scenario ? Json(to_string(*j.scenario)) : Json(nullptr);
  out["q_image"] = {{"filename", j.q.filename}, {"width", j.q.width}, {"height", j.q.height}};
  out["k_image"] = {{"filename", j.k.filename}, {"width", j.k.width}, {"height", j.k.height}};
  out["seed"] = j.seed;
  out["alignment"] = j.alignment ? to_json(*j.alignment) : Json(nullptr);
  out["transform"] = j.alignment ? to_json(j.alignment->transform) : Json(nullptr);
  out["features"] = j.features ? to_json(*j.features) : Json(nullptr);
  out["posterior"] = j.posterior ? Json(*j.posterior) : Json(nullptr);
  out["decision_threshold"] = kDecisionThreshold;
  out["error"] = j.error ? Json{{"code", j.error->first}, {"message", j.error->second}} : Json(nullptr);
  if (j.status == JobStatus::Done) out["clouds"] = {{"q", to_json(j.q_cloud)}, {"k_star", to_json(j.k_star)}};
  else out["clouds"] = nullptr;
  return out;
}

/// Forest models by id.
class ModelStore {
 public:
  void load_directory(const std::string& dir) {
    namespace fs = std::filesystem;
    if (dir.empty()) return;
    if (!fs::is_directory(dir)) throw IOError("model directory " + dir + " does not exist");
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) add(f.stem().string(), load_model(f.string()));
  }

  void add(const std::string& id, ForestModel model) {
    if (!model.trained()) throw StateError("model " + id + " has no trees");
    models_[id] = std::make_shared<const ForestModel>(std::move(model));
  }

  /// "default" when present, otherwise the first id in sorted order.
  std::optional<std::string> default_id() const {
    if (models_.count("default")) return "default";
    if (models_.empty()) return std::nullopt;
    return models_.begin()->first;
  }

  std::shared_ptr<const ForestModel> find(const std::string& id) const {
    const auto it = models_.find(id);
    return it == models_.end() ? nullptr : it->second;
  }

  std::vector<std::string> ids() const {
    std::vector<std::string> out;
    for (const auto& [id, _] : models_) out.push_back(id);
    return out;
  }

 private:
  std::map<std::string, std::shared_ptr<const ForestModel>> models_;
};

/// Labelled feature rows backing the population plots.
class Population {
 public:
  void load_directory(const std::string& dir) {
    namespace fs = std::filesystem;
    if (dir.empty()) return;
    if (!fs::is_directory(dir)) throw IOError("population directory " + dir + " does not exist");
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) add(read_feature_csv(f.string()));
  }

  void add(const std::vector<FeatureRow>& rows) { rows_.insert(rows_.end(), rows.begin(), rows.end()); }
  bool empty() const { return rows_.empty(); }

  /// Histogram and KDE per class for one metric, optionally restricted to a
  /// scenario. Densities are clipped to the metric's attainable range.
  Json summary(std::size_t feature, std::optional<Scenario> scenario, int bins, int kde_points) const {
    const std::string name(kFeatureNames[feature]);
    const auto [lo, hi] = feature_range(name);
    const auto mated = feature_column(rows_, feature, scenario, 1);
    const auto non_mated = feature_column(rows_, feature, scenario, 0);
    std::vector<double> both = mated;
    both.insert(both.end(), non_mated.begin(), non_mated.end());
    Json out{{"metric", name}};
    out["scenario"] = scenario ? Json(to_string(*scenario)) : Json(nullptr);
    out["range"] = {std::isfinite(lo) ? Json(lo) : Json(nullptr), std::isfinite(hi) ? Json(hi) : Json(nullptr)};
    double hlo = 0.0, hhi = 1.0;
    if (!both.empty()) {
      const auto [mn, mx] = std::minmax_element(both.begin(), both.end());
      hlo = std::max(lo, *mn);
      hhi = std::min(hi, *mx);
    }
    auto side = [&](const std::vector<double>& v) -> Json {
      if (v.empty()) return nullptr;
      const Histogram h = histogram(v, bins, hlo, hhi);
      const DensityCurve d = gaussian_kde(v, kde_points, lo, hi);
      return Json{{"n", v.size()},
                  {"histogram", {{"edges", h.edges}, {"counts", h.counts}}},
                  {"kde", {{"x", d.x}, {"y", d.y}, {"bandwidth", d.bandwidth}}}};
    };
    out["mated"] = side(mated);
    out["non_mated"] = side(non_mated);
    return out;
  }

 private:
  std::vector<FeatureRow> rows_;
};

/// Job store plus a bounded worker pool running the pair pipeline.
class PairService {
 public:
  explicit PairService(ServiceConfig cfg) : cfg_(std::move(cfg)), uuid_rng_(std::random_device{}()) {
    cfg_.validate();
    models_.load_directory(cfg_.model_dir);
    population_.load_directory(cfg_.population_dir);
    for (unsigned i = 0; i < cfg_.workers; ++i) workers_.emplace_back([this] { worker_loop(); });
  }

  PairService(const PairService&) = delete;
  PairService& operator=(const PairService&) = delete;

  ~PairService() { stop(); }

  void stop() {
    {
      std::lock_guard lock(mu_);
      if (stopping_) return;
      stopping_ = true;
    }
    cv_.notify_all();
    for (auto& t : workers_) t.join();
  }

  const ServiceConfig& config() const { return cfg_; }
  ModelStore& models() { return models_; }
  Population& population() { return population_; }

  enum class SubmitError { None, UnknownModel, NoModel, QueueFull };

  struct Submission {
    SubmitError error = SubmitError::None;
    std::string job_id;
  };

  /// Queues a pair. The job seed hashes the service seed with the image
  /// bytes, model id and scenario, so resubmitting a pair reproduces it.
  Submission submit(GrayImage q, GrayImage k, const std::string& q_bytes, const std::string& k_bytes, ImageRef q_ref,
                    ImageRef k_ref, const std::string& model_id, std::optional<Scenario> scenario) {
    Submission s;
    std::string id = model_id;
    if (id.empty()) {
      const auto d = models_.default_id();
      if (!d) {
        s.error = SubmitError::NoModel;
        return s;
      }
      id = *d;
    }
    auto model = models_.find(id);
    if (!model) {
      s.error = SubmitError::UnknownModel;
      return s;
    }
    auto job = std::make_shared<Entry>();
    job->state.model_id = id;
    job->state.scenario = scenario;
    job->state.q = std::move(q_ref);
    job->state.k = std::move(k_ref);
    std::uint64_t h = fnv1a64(q_bytes);
    h = derive_seed(h, fnv1a64(k_bytes));
    h = derive_seed(h, fnv1a64(id));
    h = derive_seed(h, scenario ? static_cast<std::uint64_t>(*scenario) + 1 : 0);
    job->state.seed = derive_seed(cfg_.seed, h);
    job->q = std::move(q);
    job->k = std::move(k);
    job->model = std::move(model);
    {
      std::lock_guard lock(mu_);
      if (queue_.size() >= cfg_.queue_limit) {
        s.error = SubmitError::QueueFull;
        return s;
      }
      job->state.job_id = make_uuid();
      jobs_[job->state.job_id] = job;
      queue_.push_back(job);
      s.job_id = job->state.job_id;
    }
    cv_.notify_one();
    return s;
  }

  std::optional<PairJob> job(const std::string& id) const {
    std::shared_ptr<Entry> e;
    {
      std::lock_guard lock(mu_);
      const auto it = jobs_.find(id);
      if (it == jobs_.end()) return std::nullopt;
      e = it->second;
    }
    std::lock_guard lock(e->mu);
    return e->state;
  }

  /// Blocks until the job finishes or `timeout` passes.
  std::optional<PairJob> wait(const std::string& id, std::chrono::milliseconds timeout) const {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    while (true) {
      auto j = job(id);
      if (!j || j->status == JobStatus::Done || j->status == JobStatus::Failed) return j;
      if (std::chrono::steady_clock::now() >= deadline) return j;
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
  }

 private:
  struct Entry {
    mutable std::mutex mu;
    PairJob state;
    GrayImage q, k;
    std::shared_ptr<const ForestModel> model;
  };

  std::string make_uuid() {
    std::uint64_t a = uuid_rng_(), b = uuid_rng_();
    a = (a & ~0xF000ull) | 0x4000ull;                    // version 4
    b = (b & ~(3ull << 62)) | (2ull << 62);              // RFC 4122 variant
    char buf[40];
    std::snprintf(buf, sizeof buf, "%08x-%04x-%04x-%04x-%012llx", static_cast<unsigned>(a >> 32),
                  static_cast<unsigned>((a >> 16) & 0xFFFF), static_cast<unsigned>(a & 0xFFFF),
                  static_cast<unsigned>(b >> 48), static_cast<unsigned long long>(b & 0xFFFFFFFFFFFFull));
    return buf;
  }

  void set_status(Entry& e, JobStatus s) {
    std::lock_guard lock(e.mu);
    e.state.status = s;
  }

  void run(Entry& e) {
    try {
      set_status(e, JobStatus::Aligning);
      PipelineConfig pc = cfg_.pipeline;
      pc.icp.seed = e.state.seed;
      PreparedPair p = prepare_pair(PairImages{e.q, e.k, std::nullopt, false}, pc);
      AlignmentResult alignment = align(p.q_cloud, p.k_cloud, pc.icp);
      {
        std::lock_guard lock(e.mu);
        e.state.alignment = alignment;
        e.state.status = JobStatus::Featurizing;
      }
      const PointCloud k_star = apply(alignment.transform, p.k_cloud);
      FeatureVector fv = compute_features(p.q_cloud, k_star, p.jq, p.jk, alignment.transform, pc.icp.seed);
      const ForestModel& model = *e.model;
      if (model.indicator_columns && !e.state.scenario)
        throw SchemaError("model " + e.state.model_id + " needs the pair's scenario");
      const double posterior = model.predict(model_input(fv, e.state.scenario, model.indicator_columns));
      auto thin = [&](const PointCloud& c, std::uint64_t salt) {
        if (c.size() <= cfg_.max_cloud_points) return c;
        return downsample(c, static_cast<double>(cfg_.max_cloud_points) / static_cast<double>(c.size()),
                          derive_seed(e.state.seed, salt));
      };
      PointCloud q_show = thin(p.q_cloud, 1), k_show = thin(k_star, 2);
      std::lock_guard lock(e.mu);
      e.state.features = std::move(fv);
      e.state.posterior = posterior;
      e.state.q_cloud = std::move(q_show);
      e.state.k_star = std::move(k_show);
      e.state.status = JobStatus::Done;
    } catch (const Error& err) {
      fail(e, err.code(), err.what());
    } catch (const std::exception& err) {
      fail(e, "InternalError", err.what());
    }
    e.q = GrayImage();
    e.k = GrayImage();
  }

  static void fail(Entry& e, const std::string& code, const std::string& message) {
    std::lock_guard lock(e.mu);
    e.state.error = {{code, message}};
    e.state.status = JobStatus::Failed;
  }

  void worker_loop() {
    while (true) {
      std::shared_ptr<Entry> next;
      {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
        if (stopping_) return;
        next = queue_.front();
        queue_.pop_front();
      }
      run(*next);
    }
  }

  ServiceConfig cfg_;
  ModelStore models_;
  Population population_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::shared_ptr<Entry>> queue_;
  std::map<std::string, std::shared_ptr<Entry>> jobs_;
  std::vector<std::thread> workers_;
  std::mt19937_64 uuid_rng_;
  bool stopping_ = false;
};

// ---------------------------------------------------------------------------
// HTTP binding
// ---------------------------------------------------------------------------

namespace detail {

inline void send_json(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

inline void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message) {
  send_json(res, status, Json{{"error", {{"code", code}, {"message", message}}}});
}

}  // namespace detail

/// Registers the JSON API and static file mount on `server`.
inline void install_routes(httplib::Server& server, PairService& service) {
  const ServiceConfig& cfg = service.config();
  server.set_payload_max_length(2 * cfg.max_image_bytes + (1u << 20));

  server.Post("/api/pairs", [&service, &cfg](const httplib::Request& req, httplib::Response& res) {
    if (!req.is_multipart_form_data()) {
      detail::send_error(res, 400, "FormatError", "expected multipart/form-data with q_image and k_image");
      return;
    }
    for (const char* field : {"q_image", "k_image"})
      if (!req.has_file(field)) {
        detail::send_error(res, 400, "FormatError", std::string("missing file field ") + field);
        return;
      }
    const auto qf = req.get_file_value("q_image"), kf = req.get_file_value("k_image");
    for (const auto* f : {&qf, &kf})
      if (f->content.size() > cfg.max_image_bytes) {
        detail::send_error(res, 413, "PayloadTooLarge", f->name + " exceeds " + std::to_string(cfg.max_image_bytes) + " bytes");
        return;
      }
    GrayImage q, k;
    try {
      auto bytes = [](const std::string& s) {
        return std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(s.data()), s.size());
      };
      q = decode_gray(bytes(qf.content));
      k = decode_gray(bytes(kf.content));
    } catch (const Error& e) {
      detail::send_error(res, 400, e.code(), e.what());
      return;
    }
    std::string model_id;
    if (req.has_file("model_id")) model_id = req.get_file_value("model_id").content;
    else if (req.has_param("model_id")) model_id = req.get_param_value("model_id");
    std::optional<Scenario> scenario;
    std::string scen_text;
    if (req.has_file("scenario")) scen_text = req.get_file_value("scenario").content;
    else if (req.has_param("scenario")) scen_text = req.get_param_value("scenario");
    if (!scen_text.empty()) {
      scenario = try_parse_scenario(scen_text);
      if (!scenario) {
        detail::send_error(res, 400, "SchemaError", "unknown scenario " + scen_text);
        return;
      }
    }
    ImageRef qr{qf.filename, q.width(), q.height()}, kr{kf.filename, k.width(), k.height()};
    const auto sub = service.submit(std::move(q), std::move(k), qf.content, kf.content, qr, kr, model_id, scenario);
    switch (sub.error) {
      case PairService::SubmitError::UnknownModel:
        detail::send_error(res, 404, "UnknownModel", "no model named " + model_id);
        return;
      case PairService::SubmitError::NoModel:
        detail::send_error(res, 404, "UnknownModel", "no model is loaded");
        return;
      case PairService::SubmitError::QueueFull:
        detail::send_error(res, 429, "QueueFull", "too many pending jobs; retry later");
        return;
      case PairService::SubmitError::None: break;
    }
    detail::send_json(res, 202, Json{{"job_id", sub.job_id}});
  });

  server.Get(R"(/api/pairs/([^/]+))", [&service](const httplib::Request& req, httplib::Response& res) {
    const auto job = service.job(req.matches[1]);
    if (!job) {
      detail::send_error(res, 404, "UnknownJob", "no job with id " + std::string(req.matches[1]));
      return;
    }
    detail::send_json(res, 200, to_json(*job));
  });

  server.Get(R"(/api/population/([^/]+))", [&service, &cfg](const httplib::Request& req, httplib::Response& res) {
    const std::string metric = req.matches[1];
    const auto f = feature_index(metric);
    if (!f) {
      detail::send_error(res, 404, "UnknownMetric", "no metric named " + metric);
      return;
    }
    if (service.population().empty()) {
      detail::send_error(res, 404, "NoPopulation", "no population data is loaded");
      return;
    }
    std::optional<Scenario> scenario;
    if (req.has_param("scenario") && !req.get_param_value("scenario").empty()) {
      scenario = try_parse_scenario(req.get_param_value("scenario"));
      if (!scenario) {
        detail::send_error(res, 400, "SchemaError", "unknown scenario " + req.get_param_value("scenario"));
        return;
      }
    }
    detail::send_json(res, 200, service.population().summary(*f, scenario, cfg.histogram_bins, cfg.kde_points));
  });

  server.Get("/api/models", [&service](const httplib::Request&, httplib::Response& res) {
    const auto d = service.models().default_id();
    detail::send_json(res, 200, Json{{"models", service.models().ids()}, {"default", d ? Json(*d) : Json(nullptr)}});
  });

  server.Get("/api/metrics", [](const httplib::Request&, httplib::Response& res) {
    Json names = Json::array();
    for (auto n : kFeatureNames) names.push_back(std::string(n));
    detail::send_json(res, 200, Json{{"metrics", names}});
  });

  if (!cfg.static_dir.empty() && !server.set_mount_point("/", cfg.static_dir))
    throw IOError("static directory " + cfg.static_dir + " does not exist");
}

}  // namespace sole
