#include "alsubset/subset_state.hpp"

#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

#include "alsubset/config.hpp"
#include "alsubset/text_util.hpp"

namespace alsubset {

SubsetState::SubsetState(std::span<const SampleId> ids) {
  for (SampleId id : ids) {
    add(id);
  }
}

void SubsetState::add(SampleId id, std::uint32_t count) {
  if (count == 0) {
    throw std::invalid_argument("multiplicity increments must be positive");
  }
  counts_[id] += count;
  total_ += count;
}

std::uint32_t SubsetState::multiplicity(SampleId id) const {
  const auto it = counts_.find(id);
  return it == counts_.end() ? 0 : it->second;
}

std::vector<SampleId> SubsetState::ids() const {
  std::vector<SampleId> out;
  out.reserve(counts_.size());
  for (const auto& [id, count] : counts_) {
    out.push_back(id);
  }
  return out;
}

std::vector<SampleId> SubsetState::expanded() const {
  std::vector<SampleId> out;
  out.reserve(total_);
  for (const auto& [id, count] : counts_) {
    out.insert(out.end(), count, id);
  }
  return out;
}

std::uint64_t SubsetState::hash() const {
  std::string bytes;
  bytes.reserve(counts_.size() * 12);
  for (const auto& [id, count] : counts_) {
    bytes.append(reinterpret_cast<const char*>(&id), sizeof(id));
    bytes.append(reinterpret_cast<const char*>(&count), sizeof(count));
  }
  return fnv1a64(bytes);
}

void write_subset_csv(std::ostream& out, const SubsetState& state) {
  out << "sample_id,multiplicity\n";
  for (const auto& [id, count] : state.counts()) {
    out << id << ',' << count << '\n';
  }
}

SubsetState read_subset_csv(std::istream& in) {
  SubsetState state;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    const auto fields = detail::split_csv_line(line);
    if (fields[0].empty() || fields[0].starts_with("#")) {
      continue;
    }
    if (first && !detail::looks_numeric(fields[0])) {
      first = false;
      continue;
    }
    first = false;
    const auto id = detail::parse_number<SampleId>(fields[0]);
    const auto count = fields.size() > 1 ? detail::parse_number<std::uint32_t>(fields[1]) : 1u;
    state.add(id, count);
  }
  return state;
}

}  // namespace alsubset
