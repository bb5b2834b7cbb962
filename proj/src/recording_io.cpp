#include "tsxai/recording_io.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "tsxai/detail/binary.hpp"
#include "tsxai/error.hpp"

namespace tsxai {
namespace {

constexpr char kMagic[4] = {'T', 'S', 'R', 'C'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

std::pair<std::filesystem::path, std::filesystem::path> write_recording(const Recording& recording,
                                                                        const std::filesystem::path& stem) {
  validate_recording(recording);
  std::filesystem::path bin = stem, meta = stem;
  bin += ".tsrc";
  meta += ".json";
  {
    std::ofstream out(bin, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + bin.string());
    out.write(kMagic, 4);
    detail::put_u32(out, kVersion);
    detail::put_u32(out, static_cast<std::uint32_t>(recording.channels()));
    detail::put_u32(out, static_cast<std::uint32_t>(recording.samples()));
    detail::put_f64(out, recording.sample_rate);
    for (double v : recording.signal.values()) detail::put_f64(out, v);
    if (!out) throw DataError("write failed: " + bin.string());
  }
  {
    nlohmann::ordered_json j;
    j["subject_id"] = recording.subject_id;
    j["label"] = label_name(recording.label);
    j["channel_names"] = recording.channel_names;
    std::ofstream out(meta, std::ios::trunc);
    if (!out) throw DataError("cannot write " + meta.string());
    out << j.dump(2) << '\n';
  }
  return {bin, meta};
}

Recording read_recording(const std::filesystem::path& tsrc_path) {
  std::ifstream in(tsrc_path, std::ios::binary);
  if (!in) throw DataError("cannot open " + tsrc_path.string());
  Recording rec;
  try {
    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4 || !std::equal(magic, magic + 4, kMagic)) throw DataError("bad magic");
    const std::uint32_t version = detail::get_u32(in);
    if (version != kVersion) throw DataError("unsupported version " + std::to_string(version));
    const std::uint32_t C = detail::get_u32(in);
    const std::uint32_t N = detail::get_u32(in);
    rec.sample_rate = detail::get_f64(in);
    std::vector<double> values(static_cast<std::size_t>(C) * N);
    for (double& v : values) v = detail::get_f64(in);
    rec.signal = Tensor({C, N}, std::move(values));
  } catch (const std::exception& e) {
    throw DataError(tsrc_path.string() + ": " + e.what());
  }
  std::filesystem::path meta = tsrc_path;
  meta.replace_extension(".json");
  std::ifstream side(meta);
  if (!side) throw DataError("missing sidecar " + meta.string());
  try {
    const auto j = nlohmann::json::parse(side);
    rec.subject_id = j.at("subject_id").get<std::string>();
    rec.label = parse_label(j.at("label").get<std::string>());
    rec.channel_names = j.at("channel_names").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(meta.string() + ": " + e.what());
  }
  validate_recording(rec);
  return rec;
}

Recording read_recording_csv(const std::filesystem::path& csv_path, std::string subject_id, ClassLabel label,
                             double sample_rate) {
  std::ifstream in(csv_path);
  if (!in) throw DataError("cannot open " + csv_path.string());
  auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
      while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
      cells.push_back(cell);
    }
    return cells;
  };
  std::string line;
  if (!std::getline(in, line)) throw DataError(csv_path.string() + ": empty file");
  Recording rec;
  rec.subject_id = std::move(subject_id);
  rec.label = label;
  rec.sample_rate = sample_rate;
  rec.channel_names = split(line);
  const std::size_t C = rec.channel_names.size();
  std::vector<std::vector<double>> columns(C);
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.find_first_not_of(" \r\t") == std::string::npos) continue;
    const auto cells = split(line);
    if (cells.size() != C) {
      throw DataError(csv_path.string() + ": row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                      " cells, expected " + std::to_string(C));
    }
    for (std::size_t c = 0; c < C; ++c) {
      try {
        std::size_t used = 0;
        columns[c].push_back(std::stod(cells[c], &used));
        if (used != cells[c].size()) throw std::invalid_argument("trailing characters");
      } catch (const std::exception&) {
        throw DataError(csv_path.string() + ": row " + std::to_string(row) + " has a non-numeric cell");
      }
    }
  }
  const std::size_t N = C ? columns[0].size() : 0;
  std::vector<double> values;
  values.reserve(C * N);
  for (const auto& col : columns) values.insert(values.end(), col.begin(), col.end());
  rec.signal = Tensor({C, N}, std::move(values));
  validate_recording(rec);
  return rec;
}

}  // namespace tsxai
