#include "alsubset/prediction_io.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

#include "alsubset/binary_io.hpp"
#include "alsubset/text_util.hpp"

namespace alsubset {

namespace {

constexpr char kMagic[4] = {'A', 'L', 'P', 'T'};

}  // namespace

void write_prediction_tensor(std::ostream& out, const PredictionTensor& tensor) {
  out.write(kMagic, 4);
  detail::write_le<std::uint16_t>(out, kPredictionFormatVersion);
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.samples()));
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.members()));
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.classes()));
  for (float v : tensor.data()) {
    detail::write_le<float>(out, v);
  }
  for (SampleId id : tensor.sample_ids()) {
    detail::write_le<std::uint64_t>(out, id);
  }
  if (!out) {
    throw std::runtime_error("failed writing prediction tensor");
  }
}

PredictionTensor read_prediction_tensor(std::istream& in) {
  char magic[4] = {};
  if (!in.read(magic, 4) || !std::equal(magic, magic + 4, kMagic)) {
    throw std::runtime_error("not an ALPT prediction file");
  }
  const auto version = detail::read_le<std::uint16_t>(in);
  if (version != kPredictionFormatVersion) {
    throw std::runtime_error("unsupported ALPT version " + std::to_string(version));
  }
  const std::size_t n = detail::read_le<std::uint32_t>(in);
  const std::size_t e = detail::read_le<std::uint32_t>(in);
  const std::size_t k = detail::read_le<std::uint32_t>(in);
  std::vector<float> data(n * e * k);
  for (float& v : data) {
    v = detail::read_le<float>(in);
  }
  std::vector<SampleId> ids(n);
  for (SampleId& id : ids) {
    id = detail::read_le<std::uint64_t>(in);
  }
  return PredictionTensor(e, k, std::move(ids), std::move(data));
}

void write_prediction_tensor(const std::filesystem::path& path, const PredictionTensor& tensor) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot open " + path.string() + " for writing");
  }
  write_prediction_tensor(out, tensor);
}

PredictionTensor read_prediction_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open " + path.string());
  }
  return read_prediction_tensor(in);
}

PredictionTensor read_prediction_csv(std::istream& in) {
  struct Row {
    std::size_t member;
    std::vector<float> probs;
  };
  std::vector<SampleId> order;
  std::map<SampleId, std::vector<Row>> rows;
  std::size_t classes = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto fields = detail::split_csv_line(line);
    if (fields.empty() || (fields.size() == 1 && fields[0].empty()) || fields[0].starts_with("#")) {
      continue;
    }
    if (line_no == 1 && !detail::looks_numeric(fields[0])) {
      continue;  // header
    }
    if (fields.size() < 3) {
      throw std::runtime_error("prediction CSV line " + std::to_string(line_no) +
                               ": expected sample_id, member, p_0..p_{K-1}");
    }
    const std::size_t k = fields.size() - 2;
    if (classes == 0) {
      classes = k;
    } else if (k != classes) {
      throw std::runtime_error("prediction CSV line " + std::to_string(line_no) +
                               ": inconsistent class count");
    }
    const SampleId id = detail::parse_number<std::uint64_t>(fields[0]);
    Row row{detail::parse_number<std::size_t>(fields[1]), {}};
    row.probs.reserve(k);
    for (std::size_t i = 2; i < fields.size(); ++i) {
      row.probs.push_back(detail::parse_number<float>(fields[i]));
    }
    auto [it, inserted] = rows.try_emplace(id);
    if (inserted) {
      order.push_back(id);
    }
    it->second.push_back(std::move(row));
  }
  if (order.empty()) {
    return PredictionTensor(0, 0, {}, {});
  }
  const std::size_t members = rows.at(order.front()).size();
  std::vector<float> data;
  data.reserve(order.size() * members * classes);
  for (SampleId id : order) {
    auto& sample_rows = rows.at(id);
    if (sample_rows.size() != members) {
      throw std::runtime_error("sample " + std::to_string(id) + " has " +
                               std::to_string(sample_rows.size()) + " members, expected " +
                               std::to_string(members));
    }
    std::sort(sample_rows.begin(), sample_rows.end(),
              [](const Row& a, const Row& b) { return a.member < b.member; });
    for (std::size_t e = 0; e < members; ++e) {
      if (sample_rows[e].member != e) {
        throw std::runtime_error("sample " + std::to_string(id) + " members are not 0..E-1");
      }
      data.insert(data.end(), sample_rows[e].probs.begin(), sample_rows[e].probs.end());
    }
  }
  return PredictionTensor(members, classes, std::move(order), std::move(data));
}

PredictionTensor load_predictions(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open " + path.string());
  }
  char head[4] = {};
  in.read(head, 4);
  const bool binary = in.gcount() == 4 && std::equal(head, head + 4, kMagic);
  in.clear();
  in.seekg(0);
  return binary ? read_prediction_tensor(in) : read_prediction_csv(in);
}

}  // namespace alsubset
