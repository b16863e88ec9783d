#include "causalcast/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "causalcast/error.hpp"

namespace causalcast {

namespace {

constexpr char kMagic[8] = {'C', 'C', 'A', 'S', 'T', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put_le(std::string& out, T value) {
  static_assert(sizeof(T) == 4 || sizeof(T) == 8);
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  const U bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

template <class T>
T get_le(std::string_view bytes, std::size_t& pos) {
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  if (pos + sizeof(T) > bytes.size()) throw Error(ErrorCode::IoError, "checkpoint is truncated");
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    bits |= static_cast<U>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
  }
  pos += sizeof(T);
  return std::bit_cast<T>(bits);
}

}  // namespace

nlohmann::json to_json(const nn::NetworkShape& s) {
  return {{"features", s.features}, {"gru_hidden", s.gru_hidden}, {"lstm_hidden", s.lstm_hidden},
          {"dense", s.dense},       {"lookback", s.lookback},     {"dropout", s.dropout}};
}

nn::NetworkShape network_shape_from_json(const nlohmann::json& j) {
  nn::NetworkShape s;
  s.features = j.at("features").get<std::size_t>();
  s.gru_hidden = j.at("gru_hidden").get<std::size_t>();
  s.lstm_hidden = j.at("lstm_hidden").get<std::size_t>();
  s.dense = j.at("dense").get<std::size_t>();
  s.lookback = j.at("lookback").get<std::size_t>();
  s.dropout = j.at("dropout").get<double>();
  s.validate();
  return s;
}

nlohmann::json to_json(const nn::TrainConfig& c) {
  return {{"batch_size", c.batch_size},
          {"max_epochs", c.max_epochs},
          {"patience", c.patience},
          {"learning_rate", c.learning_rate},
          {"seed", c.seed}};
}

nn::TrainConfig train_config_from_json(const nlohmann::json& j) {
  nn::TrainConfig c;
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.patience = j.value("patience", c.patience);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.seed = j.value("seed", c.seed);
  return c;
}

std::string serialize_checkpoint(const Checkpoint& ck) {
  const nlohmann::json header = {{"shape", to_json(ck.model.shape())},
                                 {"features", ck.features},
                                 {"target", ck.target},
                                 {"lead", ck.lead},
                                 {"variant", ck.variant},
                                 {"frequency", to_string(ck.frequency)},
                                 {"normalization", to_json(ck.normalization)},
                                 {"train_config", to_json(ck.train_config)},
                                 {"metadata", ck.metadata}};
  const std::string text = header.dump();
  const auto values = ck.model.params().values();
  std::string out(kMagic, sizeof(kMagic));
  out.reserve(out.size() + 20 + text.size() + 8 * values.size());
  put_le(out, kVersion);
  put_le(out, static_cast<std::uint64_t>(text.size()));
  out += text;
  put_le(out, static_cast<std::uint64_t>(values.size()));
  for (const double v : values) put_le(out, v);
  return out;
}

Checkpoint deserialize_checkpoint(std::string_view bytes) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw Error(ErrorCode::IoError, "not a checkpoint (bad magic)");
  }
  std::size_t pos = sizeof(kMagic);
  const auto version = get_le<std::uint32_t>(bytes, pos);
  if (version != kVersion) {
    throw Error(ErrorCode::IoError, "unsupported checkpoint version " + std::to_string(version));
  }
  const auto header_len = get_le<std::uint64_t>(bytes, pos);
  if (pos + header_len > bytes.size()) throw Error(ErrorCode::IoError, "checkpoint is truncated");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(pos, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::IoError, std::string("bad checkpoint header: ") + e.what());
  }
  pos += header_len;

  Checkpoint ck;
  try {
    ck.model = nn::RecurrentModel(network_shape_from_json(header.at("shape")));
    ck.features = header.at("features").get<std::vector<std::string>>();
    ck.target = header.at("target").get<std::string>();
    ck.lead = header.at("lead").get<std::size_t>();
    ck.variant = header.at("variant").get<std::string>();
    ck.frequency = parse_frequency(header.at("frequency").get<std::string>());
    ck.normalization = normalization_from_json(header.at("normalization"));
    ck.train_config = train_config_from_json(header.at("train_config"));
    ck.metadata = header.value("metadata", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::IoError, std::string("bad checkpoint header: ") + e.what());
  }
  if (ck.features.size() != ck.model.shape().features) {
    throw Error(ErrorCode::ShapeError, "checkpoint feature list does not match the network input size");
  }
  const auto count = get_le<std::uint64_t>(bytes, pos);
  auto values = ck.model.params().values();
  if (count != values.size()) throw Error(ErrorCode::ShapeError, "checkpoint parameter count mismatch");
  for (auto& v : values) v = get_le<double>(bytes, pos);
  if (pos != bytes.size()) throw Error(ErrorCode::IoError, "trailing bytes after checkpoint parameters");
  return ck;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  const auto bytes = serialize_checkpoint(checkpoint);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoError, "failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return deserialize_checkpoint(buffer.str());
}

}  // namespace causalcast
