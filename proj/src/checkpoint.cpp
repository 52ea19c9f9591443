#include "gec/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace gec {

static_assert(std::endian::native == std::endian::little, "checkpoint blobs assume a little-endian host");

Checkpoint Checkpoint::from_store(const nn::ParameterStore& store) {
  Checkpoint c;
  for (const nn::Parameter* p : store.all()) {
    TensorBlob b{p->name, p->value.rows(), p->value.cols(), {}};
    b.data.resize(static_cast<size_t>(p->value.size()));
    for (long i = 0; i < p->value.size(); ++i) b.data[i] = static_cast<float>(p->value.data()[i]);
    c.tensors_.push_back(std::move(b));
  }
  return c;
}

void Checkpoint::add(TensorBlob blob) {
  if (find(blob.name)) throw std::invalid_argument("duplicate tensor " + blob.name);
  if (blob.data.size() != static_cast<size_t>(blob.rows * blob.cols))
    throw std::invalid_argument("tensor " + blob.name + " has inconsistent size");
  tensors_.push_back(std::move(blob));
}

const TensorBlob* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors_)
    if (t.name == name) return &t;
  return nullptr;
}

void Checkpoint::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json manifest;
  manifest["format"] = "gec-checkpoint-v1";
  manifest["meta"] = meta;
  auto& list = manifest["tensors"] = nlohmann::ordered_json::array();
  for (size_t i = 0; i < tensors_.size(); ++i) {
    const auto& t = tensors_[i];
    const std::string file = "t" + std::to_string(i) + ".f32";
    list.push_back({{"name", t.name}, {"shape", {t.rows, t.cols}}, {"file", file}});
    std::ofstream out(dir / file, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + (dir / file).string());
    out.write(reinterpret_cast<const char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  }
  std::ofstream out(dir / "manifest.json", std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint manifest in " + dir.string());
  out << manifest.dump(2) << '\n';
}

Checkpoint Checkpoint::load(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw std::runtime_error("no checkpoint manifest in " + dir.string());
  const auto manifest = nlohmann::json::parse(in);
  if (manifest.value("format", "") != "gec-checkpoint-v1")
    throw std::runtime_error("unsupported checkpoint format in " + dir.string());
  Checkpoint c;
  c.meta = manifest.at("meta");
  for (const auto& entry : manifest.at("tensors")) {
    TensorBlob b;
    b.name = entry.at("name");
    b.rows = entry.at("shape").at(0);
    b.cols = entry.at("shape").at(1);
    b.data.resize(static_cast<size_t>(b.rows * b.cols));
    const auto path = dir / entry.at("file").get<std::string>();
    std::ifstream blob(path, std::ios::binary);
    if (!blob) throw std::runtime_error("missing tensor file " + path.string());
    blob.read(reinterpret_cast<char*>(b.data.data()), static_cast<std::streamsize>(b.data.size() * sizeof(float)));
    if (blob.gcount() != static_cast<std::streamsize>(b.data.size() * sizeof(float)))
      throw std::runtime_error("truncated tensor file " + path.string());
    c.tensors_.push_back(std::move(b));
  }
  return c;
}

void require_same_shapes(const Checkpoint& ckpt, const nn::ParameterStore& store, const std::string& from_prefix,
                         const std::string& to_prefix) {
  std::ostringstream diff;
  int problems = 0;
  int matched = 0;
  for (const auto& t : ckpt.tensors()) {
    if (t.name.rfind(from_prefix, 0) != 0) continue;
    const std::string target = to_prefix + t.name.substr(from_prefix.size());
    const nn::Parameter* p = store.find(target);
    if (!p) {
      diff << "  " << target << ": missing in model\n";
      ++problems;
      continue;
    }
    ++matched;
    if (p->value.rows() != t.rows || p->value.cols() != t.cols) {
      diff << "  " << target << ": checkpoint " << t.rows << "x" << t.cols << " vs model " << p->value.rows() << "x"
           << p->value.cols() << '\n';
      ++problems;
    }
  }
  for (const nn::Parameter* p : store.all()) {
    if (p->name.rfind(to_prefix, 0) != 0) continue;
    if (!ckpt.find(from_prefix + p->name.substr(to_prefix.size()))) {
      diff << "  " << p->name << ": missing in checkpoint\n";
      ++problems;
    }
  }
  if (matched == 0 && problems == 0) diff << "  no tensors under prefix '" << from_prefix << "'\n", ++problems;
  if (problems) throw std::invalid_argument("checkpoint geometry mismatch:\n" + diff.str());
}

void Checkpoint::load_into(nn::ParameterStore& store, const std::string& from_prefix,
                           const std::string& to_prefix) const {
  require_same_shapes(*this, store, from_prefix, to_prefix);
  for (const auto& t : tensors_) {
    if (t.name.rfind(from_prefix, 0) != 0) continue;
    nn::Parameter& p = store.at(to_prefix + t.name.substr(from_prefix.size()));
    for (long i = 0; i < p.value.size(); ++i) p.value.data()[i] = static_cast<double>(t.data[i]);
  }
}

}  // namespace gec
