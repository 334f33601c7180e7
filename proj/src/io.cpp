#include "detdisc/io.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace detdisc {

using nlohmann::json;

namespace {

json vec_to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Eigen::VectorXd vec_from_json(const json& a) {
  if (!a.is_array()) throw ConfigError("io: expected array of reals");
  Eigen::VectorXd v(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) v(i) = a[i].get<double>();
  return v;
}

json mat_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd mat_from_json(const json& rows) {
  if (!rows.is_array() || rows.empty()) throw ConfigError("io: expected matrix");
  const std::size_t nc = rows[0].size();
  Eigen::MatrixXd m(rows.size(), nc);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != nc) throw ConfigError("io: ragged matrix");
    for (std::size_t c = 0; c < nc; ++c) m(r, c) = rows[r][c].get<double>();
  }
  return m;
}

json box_to_json(const Box& b) { return json::array({b.x_min, b.y_min, b.x_max, b.y_max}); }

Box box_from_json(const json& a) {
  if (!a.is_array() || a.size() != 4) throw ConfigError("io: box must be [x0,y0,x1,y1]");
  return {a[0].get<double>(), a[1].get<double>(), a[2].get<double>(), a[3].get<double>()};
}

json labels_to_json(const Labels& l) {
  json o = json::object();
  for (const auto& [cat, y] : l) o[cat] = y;
  return o;
}

Labels labels_from_json(const json& o) {
  Labels l;
  for (auto it = o.begin(); it != o.end(); ++it) l[it.key()] = it.value().get<int>();
  return l;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("io: cannot open " + path);
  return f;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path);
  if (!f) throw ConfigError("io: cannot write " + path);
  return f;
}

json parse(const std::string& text, const std::string& what) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ConfigError("io: malformed JSON in " + what);
  return j;
}

void reject_unknown(const json& o, const std::vector<std::string>& known,
                    const std::string& what) {
  for (auto it = o.begin(); it != o.end(); ++it) {
    bool ok = false;
    for (const std::string& k : known) {
      if (it.key() == k) {
        ok = true;
        break;
      }
    }
    if (!ok) throw ConfigError(what + ": unknown key '" + it.key() + "'");
  }
}

const char* activation_name(Activation a) {
  return a == Activation::RectifiedLinear ? "relu" : "identity";
}

Activation activation_from(const std::string& s) {
  if (s == "relu") return Activation::RectifiedLinear;
  if (s == "identity") return Activation::Identity;
  throw ConfigError("io: unknown activation '" + s + "'");
}

}  // namespace

void write_dataset(const std::string& path, const Dataset& d) {
  std::ofstream f = open_out(path);
  json header;
  header["feature_dim"] = d.feature_dim;
  header["categories_strong"] = d.categories_strong;
  header["categories_weak"] = d.categories_weak;
  f << header.dump() << "\n";

  auto write_bag = [&](const Bag& b, const char* source) {
    json o;
    o["id"] = b.id;
    o["source"] = source;
    o["weak_labels"] = labels_to_json(b.weak_labels);
    if (b.whole_image_feature) o["whole_image_feature"] = vec_to_json(*b.whole_image_feature);
    json regions = json::array();
    for (const Region& r : b.regions) {
      json ro;
      ro["box"] = box_to_json(r.box);
      ro["feature"] = vec_to_json(r.feature);
      if (r.strong_labels) ro["strong_labels"] = labels_to_json(*r.strong_labels);
      regions.push_back(std::move(ro));
    }
    o["regions"] = std::move(regions);
    f << o.dump() << "\n";
  };
  for (const Bag& b : d.strong_bags) write_bag(b, "strong");
  for (const Bag& b : d.weak_bags) write_bag(b, "weak");
}

Dataset read_dataset(const std::string& path) {
  std::ifstream f = open_in(path);
  std::string line;
  if (!std::getline(f, line)) throw ConfigError("io: empty dataset file " + path);
  json header = parse(line, path + " header");
  Dataset d;
  d.feature_dim = header.at("feature_dim").get<int>();
  for (const auto& c : header.at("categories_strong")) d.categories_strong.insert(c.get<std::string>());
  for (const auto& c : header.at("categories_weak")) d.categories_weak.insert(c.get<std::string>());

  while (std::getline(f, line)) {
    if (line.empty()) continue;
    json o = parse(line, path);
    Bag b;
    b.id = o.at("id").get<std::string>();
    const std::string source = o.at("source").get<std::string>();
    if (source != "strong" && source != "weak")
      throw ConfigError("io: bag " + b.id + ": source must be 'strong' or 'weak'");
    b.source = source == "strong" ? Source::Strong : Source::Weak;
    b.weak_labels = labels_from_json(o.at("weak_labels"));
    if (o.contains("whole_image_feature"))
      b.whole_image_feature = vec_from_json(o["whole_image_feature"]);
    for (const json& ro : o.at("regions")) {
      Region r;
      r.box = box_from_json(ro.at("box"));
      r.feature = vec_from_json(ro.at("feature"));
      if (ro.contains("strong_labels")) r.strong_labels = labels_from_json(ro["strong_labels"]);
      b.regions.push_back(std::move(r));
    }
    (b.source == Source::Strong ? d.strong_bags : d.weak_bags).push_back(std::move(b));
  }
  return d;
}

std::string model_to_string(const Model& m) {
  json o;
  json detectors = json::object();
  for (const auto& [cat, w] : m.detectors) detectors[cat] = vec_to_json(w);
  o["detectors"] = std::move(detectors);
  o["hyperparams"] = {{"alpha", m.hyper.alpha}, {"lambda", m.hyper.lambda}};
  json layers = json::array();
  for (const Layer& l : m.repr.layers) {
    layers.push_back({{"activation", activation_name(l.activation)},
                      {"bias", vec_to_json(l.bias)},
                      {"weight", mat_to_json(l.weight)}});
  }
  o["repr_params"] = {{"input_dim", m.repr.input_dim},
                      {"layers", std::move(layers)},
                      {"output_dim", m.repr.output_dim}};
  return o.dump() + "\n";
}

void write_model(const std::string& path, const Model& m) {
  open_out(path) << model_to_string(m);
}

Model read_model(const std::string& path) {
  std::stringstream buf;
  buf << open_in(path).rdbuf();
  json o = parse(buf.str(), path);
  Model m;
  for (auto it = o.at("detectors").begin(); it != o.at("detectors").end(); ++it) {
    m.detectors[it.key()] = vec_from_json(it.value());
  }
  m.hyper.alpha = o.at("hyperparams").at("alpha").get<double>();
  m.hyper.lambda = o.at("hyperparams").at("lambda").get<double>();
  const json& rp = o.at("repr_params");
  m.repr.input_dim = rp.at("input_dim").get<int>();
  m.repr.output_dim = rp.at("output_dim").get<int>();
  for (const json& lo : rp.at("layers")) {
    Layer l;
    l.activation = activation_from(lo.at("activation").get<std::string>());
    l.bias = vec_from_json(lo.at("bias"));
    l.weight = mat_from_json(lo.at("weight"));
    m.repr.layers.push_back(std::move(l));
  }
  check_model(m);
  return m;
}

void write_assignments(const std::string& path, const std::vector<MiningAssignment>& a) {
  std::ofstream f = open_out(path);
  for (const MiningAssignment& x : a) {
    json o;
    o["bag_id"] = x.bag_id;
    o["category"] = x.category;
    o["region_index"] = x.region_index;
    o["round"] = x.round;
    o["score"] = x.score;
    f << o.dump() << "\n";
  }
}

std::vector<MiningAssignment> read_assignments(const std::string& path) {
  std::ifstream f = open_in(path);
  std::vector<MiningAssignment> out;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    json o = parse(line, path);
    MiningAssignment a;
    a.bag_id = o.at("bag_id").get<std::string>();
    a.category = o.at("category").get<std::string>();
    a.region_index = o.at("region_index").get<int>();
    a.round = o.at("round").get<int>();
    a.score = o.at("score").get<double>();
    out.push_back(std::move(a));
  }
  return out;
}

void write_ground_truth(const std::string& path, const SynthGroundTruth& gt) {
  json o;
  json means = json::object();
  for (const auto& [cat, mu] : gt.means) means[cat] = vec_to_json(mu);
  o["means"] = std::move(means);
  json ctx = json::array();
  for (const Eigen::VectorXd& nu : gt.context_means) ctx.push_back(vec_to_json(nu));
  o["context_means"] = std::move(ctx);
  o["noise_sigma"] = gt.noise_sigma;
  o["transform"] = gt.transform ? mat_to_json(*gt.transform) : json();
  json planted = json::object();
  for (const auto& [bag, per_cat] : gt.planted) {
    json p = json::object();
    for (const auto& [cat, idx] : per_cat) p[cat] = idx;
    planted[bag] = std::move(p);
  }
  o["planted"] = std::move(planted);
  json boxes = json::object();
  for (const auto& [bag, per_cat] : gt.boxes) {
    json p = json::object();
    for (const auto& [cat, bs] : per_cat) {
      json arr = json::array();
      for (const Box& b : bs) arr.push_back(box_to_json(b));
      p[cat] = std::move(arr);
    }
    boxes[bag] = std::move(p);
  }
  o["boxes"] = std::move(boxes);
  open_out(path) << o.dump() << "\n";
}

SynthGroundTruth read_ground_truth(const std::string& path) {
  std::stringstream buf;
  buf << open_in(path).rdbuf();
  json o = parse(buf.str(), path);
  SynthGroundTruth gt;
  for (auto it = o.at("means").begin(); it != o.at("means").end(); ++it)
    gt.means[it.key()] = vec_from_json(it.value());
  for (const json& nu : o.at("context_means")) gt.context_means.push_back(vec_from_json(nu));
  gt.noise_sigma = o.at("noise_sigma").get<double>();
  if (!o.at("transform").is_null()) gt.transform = mat_from_json(o["transform"]);
  for (auto it = o.at("planted").begin(); it != o.at("planted").end(); ++it) {
    for (auto c = it.value().begin(); c != it.value().end(); ++c)
      gt.planted[it.key()][c.key()] = c.value().get<int>();
  }
  for (auto it = o.at("boxes").begin(); it != o.at("boxes").end(); ++it) {
    for (auto c = it.value().begin(); c != it.value().end(); ++c) {
      std::vector<Box>& bs = gt.boxes[it.key()][c.key()];
      for (const json& b : c.value()) bs.push_back(box_from_json(b));
    }
  }
  return gt;
}

void write_report(const std::string& path, const TrainReport& report) {
  std::ofstream f = open_out(path);
  f << "# stage\tepoch\tobjective\n";
  for (const StageTrace& t : report.traces) {
    for (std::size_t e = 0; e < t.objective.size(); ++e) {
      json v = t.objective[e];  // shortest round-trip decimal
      f << t.stage << "\t" << e << "\t" << v.dump() << "\n";
    }
  }
  f << "# stage\tseconds\n";
  for (const StageTrace& t : report.traces) {
    f << t.stage << "\t" << json(t.seconds).dump() << "\n";
  }
  f << "# round\tassignments\n";
  for (const auto& [round, mined] : report.mined) {
    f << round << "\t" << mined.size() << "\n";
  }
}

SynthConfig read_synth_config(const std::string& path) {
  std::stringstream buf;
  buf << open_in(path).rdbuf();
  json o = parse(buf.str(), path);
  reject_unknown(o,
                 {"seed", "num_categories_strong", "num_categories_weak", "bags_per_category",
                  "regions_per_bag", "feature_dim", "cluster_separation", "noise_sigma",
                  "num_context_clusters", "context_regions_per_bag", "positives_per_strong_bag",
                  "enable_transform", "transform"},
                 "synth config");
  SynthConfig c;
  if (o.contains("seed")) c.seed = o["seed"].get<std::uint64_t>();
  if (o.contains("num_categories_strong")) c.num_categories_strong = o["num_categories_strong"].get<int>();
  if (o.contains("num_categories_weak")) c.num_categories_weak = o["num_categories_weak"].get<int>();
  if (o.contains("bags_per_category")) c.bags_per_category = o["bags_per_category"].get<int>();
  if (o.contains("regions_per_bag")) c.regions_per_bag = o["regions_per_bag"].get<int>();
  if (o.contains("feature_dim")) c.feature_dim = o["feature_dim"].get<int>();
  if (o.contains("cluster_separation")) c.cluster_separation = o["cluster_separation"].get<double>();
  if (o.contains("noise_sigma")) c.noise_sigma = o["noise_sigma"].get<double>();
  if (o.contains("num_context_clusters")) c.num_context_clusters = o["num_context_clusters"].get<int>();
  if (o.contains("context_regions_per_bag")) c.context_regions_per_bag = o["context_regions_per_bag"].get<int>();
  if (o.contains("positives_per_strong_bag")) c.positives_per_strong_bag = o["positives_per_strong_bag"].get<int>();
  if (o.contains("enable_transform")) c.enable_transform = o["enable_transform"].get<bool>();
  if (o.contains("transform") && !o["transform"].is_null()) c.transform = mat_from_json(o["transform"]);
  return c;
}

static MiningConfig mining_config_from(const json& o, const std::string& what) {
  reject_unknown(o, {"top_k", "max_latent_iters", "use_background_margin"}, what);
  MiningConfig c;
  if (o.contains("top_k")) c.top_k = o["top_k"].get<int>();
  if (o.contains("max_latent_iters")) c.max_latent_iters = o["max_latent_iters"].get<int>();
  if (o.contains("use_background_margin")) c.use_background_margin = o["use_background_margin"].get<bool>();
  return c;
}

MiningConfig read_mining_config(const std::string& path) {
  std::stringstream buf;
  buf << open_in(path).rdbuf();
  return mining_config_from(parse(buf.str(), path), "mining config");
}

TrainConfig read_train_config(const std::string& path) {
  std::stringstream buf;
  buf << open_in(path).rdbuf();
  json o = parse(buf.str(), path);
  reject_unknown(o,
                 {"seed", "learning_rate", "momentum", "epochs_init", "epochs_strong",
                  "epochs_joint", "outer_rounds", "batch_bags", "batch_regions", "mining",
                  "alpha", "lambda", "iou_bg_threshold", "repr_dims", "repr_activations"},
                 "train config");
  TrainConfig c;
  if (o.contains("seed")) c.seed = o["seed"].get<std::uint64_t>();
  if (o.contains("learning_rate")) c.learning_rate = o["learning_rate"].get<double>();
  if (o.contains("momentum")) c.momentum = o["momentum"].get<double>();
  if (o.contains("epochs_init")) c.epochs.init = o["epochs_init"].get<int>();
  if (o.contains("epochs_strong")) c.epochs.strong = o["epochs_strong"].get<int>();
  if (o.contains("epochs_joint")) c.epochs.joint = o["epochs_joint"].get<int>();
  if (o.contains("outer_rounds")) c.outer_rounds = o["outer_rounds"].get<int>();
  if (o.contains("batch_bags")) c.batch_bags = o["batch_bags"].get<int>();
  if (o.contains("batch_regions")) c.batch_regions = o["batch_regions"].get<int>();
  if (o.contains("mining")) c.mining = mining_config_from(o["mining"], "train config mining");
  if (o.contains("alpha")) c.alpha = o["alpha"].get<double>();
  if (o.contains("lambda")) c.lambda = o["lambda"].get<double>();
  if (o.contains("iou_bg_threshold")) c.iou_bg_threshold = o["iou_bg_threshold"].get<double>();
  if (o.contains("repr_dims")) c.repr_dims = o["repr_dims"].get<std::vector<int>>();
  if (o.contains("repr_activations")) {
    for (const json& a : o["repr_activations"])
      c.repr_activations.push_back(activation_from(a.get<std::string>()));
  }
  c.validate();
  return c;
}

EvalConfig read_eval_config(const std::string& path) {
  std::stringstream buf;
  buf << open_in(path).rdbuf();
  json o = parse(buf.str(), path);
  reject_unknown(o, {"iou_match", "nms_threshold", "split", "categories"}, "eval config");
  EvalConfig c;
  if (o.contains("iou_match")) c.iou_match = o["iou_match"].get<double>();
  if (o.contains("nms_threshold")) c.nms_threshold = o["nms_threshold"].get<double>();
  if (o.contains("split")) c.split = o["split"].get<std::string>();
  if (o.contains("categories")) c.categories = o["categories"].get<std::string>();
  if (c.split != "weak" && c.split != "strong" && c.split != "all")
    throw ConfigError("eval config: split must be weak|strong|all");
  if (c.categories != "weak" && c.categories != "strong" && c.categories != "all")
    throw ConfigError("eval config: categories must be weak|strong|all");
  return c;
}

std::string file_hash(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("io: cannot hash " + path);
  std::uint64_t h = 1469598103934665603ULL;
  char buf[4096];
  while (f.read(buf, sizeof(buf)) || f.gcount() > 0) {
    for (std::streamsize i = 0; i < f.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ULL;
    }
  }
  char out[24];
  std::snprintf(out, sizeof(out), "fnv1a:%016llx", static_cast<unsigned long long>(h));
  return out;
}

}  // namespace detdisc
