// Copyright 2026 The ESMFL Simulator Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "esmfl/config.hpp"

#include <boost/algorithm/string.hpp>
#include <boost/lexical_cast.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "esmfl/errors.hpp"

namespace esmfl::fl {

namespace pt = boost::property_tree;

const char* mode_name(Mode m) {
  switch (m) {
    case Mode::kAdmm:
      return "admm";
    case Mode::kMasked:
      return "masked";
    case Mode::kDense:
      return "dense";
  }
  return "?";
}

Mode parse_mode(const std::string& s) {
  if (s == "admm") return Mode::kAdmm;
  if (s == "masked") return Mode::kMasked;
  if (s == "dense") return Mode::kDense;
  throw ConfigError("unknown mode '" + s + "' (expected admm, masked or dense)");
}

namespace {

template <typename T>
T convert(const std::string& key, const std::string& value) {
  try {
    if constexpr (std::is_same_v<T, bool>) {
      const auto v = boost::algorithm::to_lower_copy(value);
      if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
      if (v == "false" || v == "0" || v == "no" || v == "off") return false;
      throw boost::bad_lexical_cast();
    } else if constexpr (std::is_unsigned_v<T>) {
      if (!value.empty() && value.front() == '-') throw boost::bad_lexical_cast();
      return boost::lexical_cast<T>(value);
    } else {
      return boost::lexical_cast<T>(value);
    }
  } catch (const boost::bad_lexical_cast&) {
    throw ConfigError("bad value for " + key + ": '" + value + "'");
  }
}

std::vector<std::size_t> parse_list(const std::string& key, const std::string& value) {
  std::vector<std::string> parts;
  boost::algorithm::split(parts, value, boost::is_any_of(", "), boost::token_compress_on);
  std::vector<std::size_t> out;
  for (auto& p : parts) {
    if (!p.empty()) out.push_back(convert<std::size_t>(key, p));
  }
  return out;
}

std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

using Setter = std::function<void(ExperimentConfig&, const std::string&, const std::string&)>;

template <typename T>
Setter field(T ExperimentConfig::*member) {
  return [member](ExperimentConfig& c, const std::string& key, const std::string& v) {
    c.*member = convert<T>(key, v);
  };
}

const std::map<std::string, std::map<std::string, Setter>>& setters() {
  static const std::map<std::string, std::map<std::string, Setter>> table = {
      {"model",
       {
           {"arch", field(&ExperimentConfig::arch)},
           {"hidden", [](ExperimentConfig& c, const std::string& k,
                         const std::string& v) { c.hidden = parse_list(k, v); }},
       }},
      {"data",
       {
           {"dataset", field(&ExperimentConfig::dataset)},
           {"dir", field(&ExperimentConfig::data_dir)},
           {"partition", field(&ExperimentConfig::partition)},
           {"shard_size", field(&ExperimentConfig::shard_size)},
           {"shards_per_client", field(&ExperimentConfig::shards_per_client)},
           {"train_examples", field(&ExperimentConfig::train_examples)},
           {"test_examples", field(&ExperimentConfig::test_examples)},
           {"synthetic_fallback", field(&ExperimentConfig::synthetic_fallback)},
           {"synthetic_train", field(&ExperimentConfig::synthetic_train)},
           {"synthetic_test", field(&ExperimentConfig::synthetic_test)},
           {"synthetic_shape",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
              const auto dims = parse_list(k, v);
              if (dims.size() != 3) throw ConfigError(k + " needs three dimensions (C,H,W)");
              c.synthetic_shape = {dims[0], dims[1], dims[2]};
            }},
           {"synthetic_classes", field(&ExperimentConfig::synthetic_classes)},
           {"synthetic_spread", field(&ExperimentConfig::synthetic_spread)},
       }},
      {"federation",
       {
           {"num_clients", field(&ExperimentConfig::num_clients)},
           {"clients_per_round", field(&ExperimentConfig::clients_per_round)},
           {"local_epochs", field(&ExperimentConfig::local_epochs)},
           {"batch_size", field(&ExperimentConfig::batch_size)},
           {"lr", field(&ExperimentConfig::lr)},
           {"momentum", field(&ExperimentConfig::momentum)},
           {"warmup_rounds", field(&ExperimentConfig::warmup_rounds)},
           {"pruning_rounds", field(&ExperimentConfig::pruning_rounds)},
           {"seed", field(&ExperimentConfig::seed)},
           {"eval_every", field(&ExperimentConfig::eval_every)},
       }},
      {"pruning",
       {
           {"mode", [](ExperimentConfig& c, const std::string&,
                       const std::string& v) { c.mode = parse_mode(v); }},
           {"rho", field(&ExperimentConfig::rho)},
           {"ramp_stages", field(&ExperimentConfig::ramp_stages)},
           {"ramp_fraction", field(&ExperimentConfig::ramp_fraction)},
           {"finetune_fraction", field(&ExperimentConfig::finetune_fraction)},
       }},
      {"crypto",
       {
           {"uplink_mbps", field(&ExperimentConfig::uplink_mbps)},
           {"downlink_mbps", field(&ExperimentConfig::downlink_mbps)},
           {"trusted_memory_mb", field(&ExperimentConfig::trusted_memory_mb)},
           {"transcript", field(&ExperimentConfig::transcript)},
       }},
  };
  return table;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config syntax: ") + e.what());
  }
  ExperimentConfig cfg;
  const auto& table = setters();
  for (const auto& [section, body] : tree) {
    const auto sit = table.find(section);
    if (sit == table.end()) {
      if (!body.data().empty()) throw ConfigError("key outside any section: " + section);
      throw ConfigError("unknown section [" + section + "]");
    }
    for (const auto& [key, node] : body) {
      const std::string value = boost::algorithm::trim_copy(node.data());
      const auto kit = sit->second.find(key);
      if (kit != sit->second.end()) {
        kit->second(cfg, section + "." + key, value);
      } else if (section == "pruning") {
        cfg.keep[key] = convert<double>("pruning." + key, value);
      } else {
        throw ConfigError("unknown key " + section + "." + key);
      }
    }
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string to_text(const ExperimentConfig& c) {
  std::ostringstream o;
  o.precision(17);
  o << "[model]\narch = " << c.arch << "\nhidden = " << join(c.hidden) << "\n\n";
  o << "[data]\ndataset = " << c.dataset << "\n";
  if (!c.data_dir.empty()) o << "dir = " << c.data_dir << "\n";
  o << "partition = " << c.partition << "\nshard_size = " << c.shard_size
    << "\nshards_per_client = " << c.shards_per_client << "\ntrain_examples = " << c.train_examples
    << "\ntest_examples = " << c.test_examples
    << "\nsynthetic_fallback = " << (c.synthetic_fallback ? "true" : "false")
    << "\nsynthetic_train = " << c.synthetic_train << "\nsynthetic_test = " << c.synthetic_test
    << "\nsynthetic_shape = " << c.synthetic_shape[0] << "," << c.synthetic_shape[1] << ","
    << c.synthetic_shape[2] << "\nsynthetic_classes = " << c.synthetic_classes
    << "\nsynthetic_spread = " << c.synthetic_spread << "\n\n";
  o << "[federation]\nnum_clients = " << c.num_clients
    << "\nclients_per_round = " << c.clients_per_round << "\nlocal_epochs = " << c.local_epochs
    << "\nbatch_size = " << c.batch_size << "\nlr = " << c.lr << "\nmomentum = " << c.momentum
    << "\nwarmup_rounds = " << c.warmup_rounds << "\npruning_rounds = " << c.pruning_rounds
    << "\nseed = " << c.seed << "\neval_every = " << c.eval_every << "\n\n";
  o << "[pruning]\nmode = " << mode_name(c.mode) << "\nrho = " << c.rho
    << "\nramp_stages = " << c.ramp_stages << "\nramp_fraction = " << c.ramp_fraction
    << "\nfinetune_fraction = " << c.finetune_fraction << "\n";
  for (const auto& [id, f] : c.keep) o << id << " = " << f << "\n";
  o << "\n[crypto]\nuplink_mbps = " << c.uplink_mbps << "\ndownlink_mbps = " << c.downlink_mbps
    << "\ntrusted_memory_mb = " << c.trusted_memory_mb
    << "\ntranscript = " << (c.transcript ? "true" : "false") << "\n";
  return o.str();
}

void validate(const ExperimentConfig& c) {
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  need(c.arch == "lenet5" || c.arch == "small_convnet" || c.arch == "mlp",
       "model.arch must be lenet5, small_convnet or mlp");
  need(c.arch != "mlp" || !c.hidden.empty(), "model.hidden must list at least one width");
  need(c.dataset == "mnist" || c.dataset == "cifar10" || c.dataset == "synthetic",
       "data.dataset must be mnist, cifar10 or synthetic");
  need(c.partition == "iid" || c.partition == "noniid", "data.partition must be iid or noniid");
  need(c.partition != "noniid" || (c.shard_size > 0 && c.shards_per_client > 0),
       "noniid partition needs positive shard_size and shards_per_client");
  need(c.dataset != "synthetic" || (c.synthetic_train > 0 && c.synthetic_test > 0 &&
                                    c.synthetic_classes >= 2),
       "synthetic data needs examples and at least two classes");
  need(c.num_clients >= 1, "federation.num_clients must be at least 1");
  need(c.clients_per_round >= 1 && c.clients_per_round <= c.num_clients,
       "federation.clients_per_round must be in [1, num_clients]");
  need(c.local_epochs >= 1, "federation.local_epochs must be at least 1");
  need(c.batch_size >= 1, "federation.batch_size must be at least 1");
  need(c.lr >= 0.0 && std::isfinite(c.lr), "federation.lr must be finite and non-negative");
  need(c.momentum >= 0.0 && c.momentum < 1.0, "federation.momentum must be in [0, 1)");
  need(c.total_rounds() >= 1, "need at least one round");
  need(c.eval_every >= 1, "federation.eval_every must be at least 1");
  need(c.rho > 0.0 && std::isfinite(c.rho), "pruning.rho must be positive");
  need(c.ramp_stages >= 1, "pruning.ramp_stages must be at least 1");
  need(c.ramp_fraction >= 0.0 && c.ramp_fraction <= 1.0, "pruning.ramp_fraction must be in [0,1]");
  need(c.finetune_fraction >= 0.0 && c.finetune_fraction <= 1.0,
       "pruning.finetune_fraction must be in [0,1]");
  need(c.ramp_fraction + c.finetune_fraction <= 1.0 + 1e-12,
       "pruning.ramp_fraction + finetune_fraction must not exceed 1");
  need(c.mode == Mode::kDense || c.pruning_rounds == 0 || !c.keep.empty(),
       "pruning rounds need per-layer keep fractions in [pruning]");
  for (const auto& [id, f] : c.keep) {
    need(f > 0.0 && f <= 1.0, "keep fraction for " + id + " must be in (0, 1]");
  }
  need(c.uplink_mbps >= 0.0 && c.downlink_mbps >= 0.0, "link speeds must be non-negative");
  need(c.trusted_memory_mb >= 1, "crypto.trusted_memory_mb must be at least 1");
}

void set_total_rounds(ExperimentConfig& cfg, std::size_t rounds) {
  if (rounds == 0) throw ConfigError("--rounds must be at least 1");
  const std::size_t old = cfg.total_rounds();
  const double share = old == 0 ? 0.0 : static_cast<double>(cfg.warmup_rounds) / old;
  cfg.warmup_rounds = static_cast<std::size_t>(std::llround(share * rounds));
  cfg.pruning_rounds = rounds - cfg.warmup_rounds;
}

model::ModelArch make_arch(const ExperimentConfig& cfg, model::SampleShape input,
                           std::size_t num_classes) {
  if (cfg.arch == "lenet5") {
    auto arch = model::lenet5();
    if (arch.input != input || arch.num_classes != num_classes) {
      throw ConfigError("lenet5 expects 1x28x28 inputs and 10 classes");
    }
    return arch;
  }
  if (cfg.arch == "small_convnet") return model::small_convnet(input, num_classes);
  if (cfg.arch == "mlp") {
    std::vector<std::size_t> widths{input[0] * input[1] * input[2]};
    widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
    widths.push_back(num_classes);
    return model::mlp(input, widths);
  }
  throw ConfigError("unknown arch " + cfg.arch);
}

std::filesystem::path resolve_data_dir(const ExperimentConfig& cfg) {
  if (!cfg.data_dir.empty()) return cfg.data_dir;
  if (const char* env = std::getenv("ESMFL_DATA_DIR"); env && *env) return env;
  return "data";
}

}  // namespace esmfl::fl
