#include "crosscog/model.hpp"

#include <cstdint>
#include <fstream>
#include <functional>

#include "crosscog/digest.hpp"
#include "json.hpp"

namespace crosscog {
namespace {

using nlohmann::json;

constexpr std::uint32_t kCheckpointMagic = 0x504B4343;  // "CCKP"
constexpr std::uint32_t kCheckpointVersion = 1;

template <class Tensor>
void append_f32(std::string& out, const Tensor& t) {
  const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic> single =
      t.template cast<float>();
  out.append(reinterpret_cast<const char*>(single.data()),
             static_cast<std::size_t>(single.size()) * sizeof(float));
}

void append_u32(std::string& out, std::uint32_t v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof v);
}

void append_u64(std::string& out, std::uint64_t v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof v);
}

// Shape plus a type-erased assigner into the live tensor.
struct SectionRef {
  std::string name;
  Eigen::Index rows = 0, cols = 0;
  std::function<void(const std::vector<float>&)> assign;
};

std::vector<SectionRef> collect_sections(ModelParams<double>& params) {
  std::vector<SectionRef> refs;
  for_each_tensor(params, [&](const std::string& name, auto& t) {
    SectionRef ref;
    ref.name = name;
    ref.rows = t.rows();
    ref.cols = t.cols();
    ref.assign = [&t](const std::vector<float>& values) {
      for (Eigen::Index i = 0; i < t.size(); ++i)
        t.data()[i] = static_cast<double>(values[static_cast<std::size_t>(i)]);
    };
    refs.push_back(std::move(ref));
  });
  return refs;
}

}  // namespace

std::string param_digest(const ModelParams<double>& params) {
  std::string buf;
  for_each_tensor(params, [&](const std::string& name, const auto& t) {
    buf.append(name);
    buf.push_back('\0');
    append_u32(buf, static_cast<std::uint32_t>(t.rows()));
    append_u32(buf, static_cast<std::uint32_t>(t.cols()));
    append_f32(buf, t);
  });
  return sha256_hex(buf);
}

void save_checkpoint(const TrainedModel& model, const std::string& path) {
  json header;
  header["format_version"] = kCheckpointVersion;
  header["frozen"] = true;
  header["tem_id"] = model.meta.tem_id;
  header["ablation"] = to_string(model.meta.ablation);
  header["cdm_variant"] = to_string(model.params.cdm.variant);
  header["d"] = model.meta.d;
  header["d_l"] = model.meta.d_l;
  header["head_hidden"] = model.meta.head_hidden;
  header["mapper_hidden"] = model.meta.mapper_hidden;
  header["seed"] = model.meta.seed;
  header["source_domains"] = model.meta.source_domains;
  header["val_auc_per_domain"] = model.meta.val_auc_per_domain;
  header["val_auc_mean"] = model.meta.val_auc_mean;
  if (!model.meta.config_echo_json.empty()) {
    try {
      header["config"] = json::parse(model.meta.config_echo_json);
    } catch (const json::exception&) {
      header["config"] = model.meta.config_echo_json;
    }
  }

  std::string data;
  json sections = json::array();
  for_each_tensor(model.params, [&](const std::string& name, const auto& t) {
    sections.push_back({{"name", name}, {"rows", t.rows()}, {"cols", t.cols()}});
    append_f32(data, t);
  });
  header["sections"] = std::move(sections);

  const std::string header_text = header.dump();
  std::string out;
  append_u32(out, kCheckpointMagic);
  append_u32(out, kCheckpointVersion);
  append_u64(out, header_text.size());
  out += header_text;
  out += data;

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f || !f.write(out.data(), static_cast<std::streamsize>(out.size())))
    throw Error(ErrorCode::IoError, "cannot write checkpoint " + path);
}

TrainedModel load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::IoError, "cannot open checkpoint " + path);

  std::uint32_t magic = 0, version = 0;
  std::uint64_t header_len = 0;
  f.read(reinterpret_cast<char*>(&magic), sizeof magic);
  f.read(reinterpret_cast<char*>(&version), sizeof version);
  f.read(reinterpret_cast<char*>(&header_len), sizeof header_len);
  if (!f || magic != kCheckpointMagic)
    throw Error(ErrorCode::IoError, path + " is not a checkpoint file");
  if (version != kCheckpointVersion)
    throw Error(ErrorCode::IoError, "unsupported checkpoint version " +
                                        std::to_string(version));
  if (header_len == 0 || header_len > (100ull << 20))
    throw Error(ErrorCode::IoError, "checkpoint header length out of range");

  std::string header_text(header_len, '\0');
  f.read(header_text.data(), static_cast<std::streamsize>(header_len));
  if (!f) throw Error(ErrorCode::IoError, "truncated checkpoint header in " + path);

  json header;
  try {
    header = json::parse(header_text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::IoError, "bad checkpoint header: " + std::string(e.what()));
  }

  TrainedModel model;
  try {
    model.meta.tem_id = header.at("tem_id").get<std::string>();
    model.meta.ablation = parse_ablation(header.at("ablation").get<std::string>());
    model.meta.d = header.at("d").get<int>();
    model.meta.d_l = header.at("d_l").get<int>();
    model.meta.head_hidden = header.at("head_hidden").get<int>();
    model.meta.mapper_hidden = header.at("mapper_hidden").get<std::vector<int>>();
    model.meta.seed = header.at("seed").get<std::uint64_t>();
    model.meta.source_domains =
        header.at("source_domains").get<std::vector<std::string>>();
    model.meta.val_auc_per_domain =
        header.at("val_auc_per_domain").get<std::vector<double>>();
    model.meta.val_auc_mean = header.at("val_auc_mean").get<double>();
    if (header.contains("config")) model.meta.config_echo_json = header["config"].dump();

    const auto variant = parse_cdm_variant(header.at("cdm_variant").get<std::string>());
    const int cdm_d = model.meta.ablation == Ablation::no_lcm ? model.meta.d_l
                                                              : model.meta.d;
    if (model.meta.ablation != Ablation::no_lcm) {
      model.params.f_s = init_mlp<double>(model.meta.d_l, model.meta.mapper_hidden,
                                          model.meta.d, 0);
      model.params.f_e = init_mlp<double>(model.meta.d_l, model.meta.mapper_hidden,
                                          model.meta.d, 0);
      model.params.f_c = init_mlp<double>(model.meta.d_l, model.meta.mapper_hidden,
                                          model.meta.d, 0);
    }
    model.params.cdm = init_cdm<double>(
        variant, cdm_d, variant == CdmVariant::mirt ? 0 : model.meta.head_hidden, 0);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::IoError, "bad checkpoint header: " + std::string(e.what()));
  }

  auto refs = collect_sections(model.params);
  const auto& sections = header.at("sections");
  if (!sections.is_array() || sections.size() != refs.size())
    throw Error(ErrorCode::IoError, "checkpoint section table does not match model");
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const auto& sec = sections[i];
    if (sec.at("name").get<std::string>() != refs[i].name ||
        sec.at("rows").get<Eigen::Index>() != refs[i].rows ||
        sec.at("cols").get<Eigen::Index>() != refs[i].cols)
      throw Error(ErrorCode::IoError,
                  "checkpoint section '" + refs[i].name + "' has unexpected shape");
    std::vector<float> values(
        static_cast<std::size_t>(refs[i].rows * refs[i].cols));
    f.read(reinterpret_cast<char*>(values.data()),
           static_cast<std::streamsize>(values.size() * sizeof(float)));
    if (!f) throw Error(ErrorCode::IoError, "truncated checkpoint data in " + path);
    refs[i].assign(values);
  }
  return model;
}

}  // namespace crosscog
