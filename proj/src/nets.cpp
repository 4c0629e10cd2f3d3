#include "crossuda/nets.hpp"

#include <fstream>

namespace crossuda {

using nlohmann::json;

ModelParams ema_update(const ModelParams& teacher, const ModelParams& student,
                       double alpha) {
  require(alpha >= 0.0 && alpha <= 1.0, ErrorKind::argument, "ema alpha must be in [0,1]");
  require(teacher.same_layout(student), ErrorKind::argument,
          "ema_update: parameter name/shape mismatch");
  ModelParams out = teacher;
  const float a = static_cast<float>(alpha);
  for (size_t i = 0; i < out.tensors.size(); ++i)
    out.tensors[i].values =
        a * teacher.tensors[i].values + (1.0f - a) * student.tensors[i].values;
  return out;
}

namespace {

constexpr char kMagic[] = "CKPT1\n";

void write_archive(const json& header, const std::vector<const NamedTensor*>& tensors,
                   const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorKind::io, "cannot open for write: " + path.string());
  const std::string htext = header.dump();
  const uint64_t hsize = htext.size();
  out.write(kMagic, 6);
  out.write(reinterpret_cast<const char*>(&hsize), 8);
  out.write(htext.data(), static_cast<std::streamsize>(htext.size()));
  for (const auto* t : tensors)
    out.write(reinterpret_cast<const char*>(t->values.data()),
              static_cast<std::streamsize>(t->values.size() * sizeof(float)));
  out.flush();
  require(out.good(), ErrorKind::io, "checkpoint write failed: " + path.string());
}

std::pair<json, ModelParams> read_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::io, "cannot open: " + path.string());
  char magic[6];
  in.read(magic, 6);
  require(in.gcount() == 6 && std::memcmp(magic, kMagic, 6) == 0, ErrorKind::bad_magic,
          "not a checkpoint file: " + path.string());
  uint64_t hsize = 0;
  in.read(reinterpret_cast<char*>(&hsize), 8);
  require(in.gcount() == 8, ErrorKind::truncated, "truncated checkpoint: " + path.string());
  std::string htext(hsize, '\0');
  in.read(htext.data(), static_cast<std::streamsize>(hsize));
  require(in.gcount() == static_cast<std::streamsize>(hsize), ErrorKind::truncated,
          "truncated checkpoint header: " + path.string());
  json header;
  try {
    header = json::parse(htext);
  } catch (const json::exception& e) {
    fail(ErrorKind::format, "bad checkpoint header: " + std::string(e.what()));
  }
  require(header.value("schema", 0) == 1, ErrorKind::format,
          "unsupported checkpoint schema in " + path.string());

  ModelParams params;
  for (const auto& jt : header.at("tensors")) {
    NamedTensor t;
    t.name = jt.at("name").get<std::string>();
    t.shape = jt.at("shape").get<std::vector<int>>();
    int64_t n = 1;
    for (int d : t.shape) n *= d;
    t.values.resize(n);
    in.read(reinterpret_cast<char*>(t.values.data()),
            static_cast<std::streamsize>(n * sizeof(float)));
    require(in.gcount() == static_cast<std::streamsize>(n * sizeof(float)),
            ErrorKind::truncated, "truncated checkpoint payload: " + path.string());
    params.tensors.push_back(std::move(t));
  }
  return {header, params};
}

json tensor_directory(const ModelParams& p) {
  json dir = json::array();
  for (const auto& t : p.tensors) {
    json jt;
    jt["name"] = t.name;
    jt["shape"] = t.shape;
    dir.push_back(jt);
  }
  return dir;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  json header;
  header["schema"] = 1;
  header["kind"] = ckpt.kind;
  header["epoch"] = ckpt.epoch;
  header["config"] = ckpt.config;
  header["tensors"] = tensor_directory(ckpt.params);
  std::vector<const NamedTensor*> refs;
  for (const auto& t : ckpt.params.tensors) refs.push_back(&t);
  write_archive(header, refs, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  auto [header, params] = read_archive(path);
  Checkpoint ckpt;
  ckpt.schema = header.at("schema").get<int>();
  ckpt.kind = header.value("kind", "");
  ckpt.epoch = header.value("epoch", 0);
  ckpt.config = header.value("config", json::object());
  ckpt.params = std::move(params);
  return ckpt;
}

void save_checkpoint_pair(const CheckpointPair& pair, const json& config,
                          const std::filesystem::path& path) {
  require(pair.student.same_layout(pair.teacher), ErrorKind::argument,
          "checkpoint pair: student/teacher layout mismatch");
  Checkpoint ckpt;
  ckpt.kind = "pair";
  ckpt.epoch = pair.epoch;
  ckpt.config = config;
  for (const auto& t : pair.student.tensors) {
    NamedTensor c = t;
    c.name = "student." + c.name;
    ckpt.params.tensors.push_back(std::move(c));
  }
  for (const auto& t : pair.teacher.tensors) {
    NamedTensor c = t;
    c.name = "teacher." + c.name;
    ckpt.params.tensors.push_back(std::move(c));
  }
  for (const auto& t : pair.optimizer_state.tensors) {
    NamedTensor c = t;
    c.name = "opt." + c.name;
    ckpt.params.tensors.push_back(std::move(c));
  }
  save_checkpoint(ckpt, path);
}

CheckpointPair load_checkpoint_pair(const std::filesystem::path& path) {
  Checkpoint ckpt = load_checkpoint(path);
  require(ckpt.kind == "pair", ErrorKind::format,
          "not a student/teacher checkpoint: " + path.string());
  CheckpointPair pair;
  pair.epoch = ckpt.epoch;
  for (auto& t : ckpt.params.tensors) {
    auto strip = [&](const char* prefix) {
      const size_t n = std::strlen(prefix);
      NamedTensor c = t;
      c.name = t.name.substr(n);
      return c;
    };
    if (t.name.rfind("student.", 0) == 0)
      pair.student.tensors.push_back(strip("student."));
    else if (t.name.rfind("teacher.", 0) == 0)
      pair.teacher.tensors.push_back(strip("teacher."));
    else if (t.name.rfind("opt.", 0) == 0)
      pair.optimizer_state.tensors.push_back(strip("opt."));
    else
      fail(ErrorKind::format, "unknown tensor section: " + t.name);
  }
  require(pair.student.same_layout(pair.teacher), ErrorKind::format,
          "corrupt pair checkpoint: " + path.string());
  return pair;
}

}  // namespace crossuda
