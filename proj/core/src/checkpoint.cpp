#include "iclkit/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

#include <json.hpp>

namespace iclkit {

using nlohmann::json;

namespace {

void append_raw(std::string& out, const void* data, std::size_t n) {
  out.append(static_cast<const char*>(data), n);
}

void append_u64(std::string& out, std::uint64_t v) {
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  append_raw(out, bytes, 8);
}

std::uint64_t read_u64(const std::string& s, std::size_t at) {
  require(at + 8 <= s.size(), ErrorKind::io, "truncated checkpoint");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[at + i])) << (8 * i);
  return v;
}

json spec_to_json(const ModelSpec& spec) {
  json j;
  j["image_mode"] = spec.input.is_image;
  j["input_dim"] = spec.input.dim;
  j["image_shape"] = {spec.input.shape.channels, spec.input.shape.height,
                      spec.input.shape.width};
  j["dense_hidden"] = spec.dense_hidden;
  j["conv_channels"] = spec.conv_channels;
  j["split_index"] = spec.split_index;
  j["feature_dim"] = spec.feature_dim;
  j["activation"] = nn::to_string(spec.activation);
  j["bias"] = spec.bias;
  j["branch_init"] = spec.branch_init == BranchInit::warm_start ? "warm_start" : "random";
  j["init_weights_file"] = spec.init_weights_file;
  return j;
}

ModelSpec spec_from_json(const json& j) {
  ModelSpec spec;
  spec.input.is_image = j.at("image_mode").get<bool>();
  spec.input.dim = j.at("input_dim").get<int>();
  auto sh = j.at("image_shape");
  spec.input.shape = ad::ImageShape{sh.at(0).get<int>(), sh.at(1).get<int>(),
                                    sh.at(2).get<int>()};
  spec.dense_hidden = j.at("dense_hidden").get<std::vector<int>>();
  spec.conv_channels = j.at("conv_channels").get<std::vector<int>>();
  spec.split_index = j.at("split_index").get<int>();
  spec.feature_dim = j.at("feature_dim").get<int>();
  spec.activation = nn::activation_from_string(j.at("activation").get<std::string>());
  spec.bias = j.at("bias").get<bool>();
  spec.branch_init = j.at("branch_init").get<std::string>() == "warm_start"
                         ? BranchInit::warm_start
                         : BranchInit::random_init;
  spec.init_weights_file = j.value("init_weights_file", std::string{});
  return spec;
}

}  // namespace

std::string serialize_values(const std::vector<const ad::Parameter*>& params) {
  std::string out;
  for (const auto* p : params) {
    append_u64(out, p->name.size());
    out += p->name;
    append_u64(out, static_cast<std::uint64_t>(p->value.rows()));
    append_u64(out, static_cast<std::uint64_t>(p->value.cols()));
    append_raw(out, p->value.data(), sizeof(double) * p->value.size());
  }
  return out;
}

void save_checkpoint(const ExpandingModel& model, const std::string& path) {
  json header;
  header["step_index"] = model.step_index();
  header["class_groups"] = model.class_groups();
  header["eta"] = model.temperature();
  header["phase"] = model.phase() == Phase::new_classes ? "new" : "old";
  header["freezing_enabled"] = model.freezing_enabled();
  header["retrain_newest_branch"] = model.retrain_newest_branch();
  header["model_spec"] = spec_to_json(model.spec());
  header["branch_prefixes"] = model.branch_prefixes();

  header["new_row_group"] = model.new_row_group();
  header["new_col_step"] = model.new_col_step();

  json block_map = json::array();
  for (const auto& b : model.classifier_blocks())
    block_map.push_back({{"row_step", b.row_step},
                         {"col_step", b.col_step},
                         {"name", b.param->name},
                         {"rows", b.param->value.rows()},
                         {"cols", b.param->value.cols()}});
  header["block_map"] = block_map;

  std::string payload;
  json entries = json::array();
  for (const auto* p : model.all_params()) {
    entries.push_back({{"name", p->name},
                       {"rows", p->value.rows()},
                       {"cols", p->value.cols()},
                       {"frozen", !p->trainable},
                       {"offset", payload.size()}});
    append_raw(payload, p->value.data(), sizeof(double) * p->value.size());
  }
  header["params"] = entries;

  std::string header_str = header.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::io, "cannot write " + path);
  out << kCheckpointMagic << "\n";
  std::string len;
  append_u64(len, header_str.size());
  out.write(len.data(), static_cast<std::streamsize>(len.size()));
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  require(static_cast<bool>(out), ErrorKind::io, "short write to " + path);
}

ExpandingModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::io, "cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  std::string magic_line = std::string(kCheckpointMagic) + "\n";
  require(bytes.size() > magic_line.size() &&
              bytes.compare(0, magic_line.size(), magic_line) == 0,
          ErrorKind::io, path + " is not an " + kCheckpointMagic + " checkpoint");
  std::size_t at = magic_line.size();
  std::uint64_t header_len = read_u64(bytes, at);
  at += 8;
  require(at + header_len <= bytes.size(), ErrorKind::io, "truncated checkpoint header");
  json header;
  try {
    header = json::parse(bytes.substr(at, header_len));
  } catch (const json::exception& e) {
    raise(ErrorKind::io, std::string("bad checkpoint header: ") + e.what());
  }
  at += header_len;

  ModelSpec spec = spec_from_json(header.at("model_spec"));
  auto groups = header.at("class_groups").get<std::vector<std::vector<int>>>();
  auto prefixes = header.at("branch_prefixes").get<std::vector<std::string>>();
  Phase phase = header.at("phase").get<std::string>() == "new" ? Phase::new_classes
                                                               : Phase::old_classes;
  ExpandingModel model = ExpandingModel::restore_topology(
      spec, groups, prefixes, header.at("new_row_group").get<int>(),
      header.at("new_col_step").get<int>(), header.at("freezing_enabled").get<bool>(),
      header.value("retrain_newest_branch", false), phase);

  std::map<std::string, ad::Parameter*> by_name;
  for (auto* p : model.all_params()) by_name[p->name] = p;
  for (const auto& entry : header.at("params")) {
    std::string name = entry.at("name").get<std::string>();
    auto it = by_name.find(name);
    require(it != by_name.end(), ErrorKind::io,
            "checkpoint parameter '" + name + "' does not fit the model topology");
    ad::Parameter* p = it->second;
    std::uint64_t rows = entry.at("rows").get<std::uint64_t>();
    std::uint64_t cols = entry.at("cols").get<std::uint64_t>();
    require(rows == static_cast<std::uint64_t>(p->value.rows()) &&
                cols == static_cast<std::uint64_t>(p->value.cols()),
            ErrorKind::io, "checkpoint shape mismatch for '" + name + "'");
    std::size_t offset = at + entry.at("offset").get<std::size_t>();
    std::size_t n_bytes = sizeof(double) * rows * cols;
    require(offset + n_bytes <= bytes.size(), ErrorKind::io, "truncated checkpoint data");
    std::memcpy(p->value.data(), bytes.data() + offset, n_bytes);
    p->trainable = !entry.at("frozen").get<bool>();
    p->zero_grad();
  }
  return model;
}

int apply_initial_weights(ExpandingModel& model, const std::string& path) {
  ExpandingModel source = load_checkpoint(path);
  std::map<std::string, const ad::Parameter*> by_name;
  const ExpandingModel& csource = source;
  for (const auto* p : csource.all_params()) by_name[p->name] = p;
  int copied = 0;
  for (auto* p : model.all_params()) {
    auto it = by_name.find(p->name);
    if (it == by_name.end()) continue;
    if (it->second->value.rows() != p->value.rows() ||
        it->second->value.cols() != p->value.cols())
      continue;
    p->value = it->second->value;
    ++copied;
  }
  require(copied > 0, ErrorKind::config,
          path + " shares no compatible parameters with this model");
  return copied;
}

}  // namespace iclkit
