#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "racemode/error.hpp"
#include "racemode/track.hpp"

namespace racemode {

namespace {

constexpr const char* kHeader = "s,x,y,psi,kappa,n_min,n_max,n_raceline,v_raceline";

std::string trim(std::string_view text) {
  auto b = text.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = text.find_last_not_of(" \t\r\n");
  return std::string(text.substr(b, e - b + 1));
}

double parse_double(const std::string& field, long row) {
  double value = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw ParseError("malformed number '" + field + "' (row " + std::to_string(row) + ")");
  }
  return value;
}

}  // namespace

TrackDefinition parse_track(const std::string& csv_text) {
  std::istringstream in(csv_text);
  std::string line;
  std::optional<bool> closed_directive;
  bool header_seen = false;
  std::vector<ReferenceSample> samples;
  long row = 0;

  while (std::getline(in, line)) {
    const std::string text = trim(line);
    if (text.empty()) continue;
    if (text.front() == '#') {
      std::string body = trim(std::string_view(text).substr(1));
      std::transform(body.begin(), body.end(), body.begin(), [](unsigned char c) { return std::tolower(c); });
      if (body.rfind("closed:", 0) == 0) {
        const std::string value = trim(std::string_view(body).substr(7));
        if (value == "true") closed_directive = true;
        else if (value == "false") closed_directive = false;
        else throw ParseError("bad closed directive '" + value + "'");
      }
      continue;
    }
    if (!header_seen) {
      std::string compact;
      for (char c : text) if (c != ' ') compact.push_back(c);
      if (compact != kHeader) throw ParseError(std::string("expected header '") + kHeader + "'");
      header_seen = true;
      continue;
    }
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ls(text);
    while (std::getline(ls, field, ',')) fields.push_back(trim(field));
    if (fields.size() != 9) {
      throw ParseError("expected 9 fields, got " + std::to_string(fields.size()) + " (row " + std::to_string(row) + ")");
    }
    ReferenceSample r;
    r.s = parse_double(fields[0], row);
    r.x = parse_double(fields[1], row);
    r.y = parse_double(fields[2], row);
    r.psi = parse_double(fields[3], row);
    r.kappa = parse_double(fields[4], row);
    r.n_min = parse_double(fields[5], row);
    r.n_max = parse_double(fields[6], row);
    r.n_raceline = parse_double(fields[7], row);
    r.v_raceline = parse_double(fields[8], row);
    samples.push_back(r);
    ++row;
  }
  if (!header_seen) throw ParseError("missing header");
  if (samples.size() < 2) throw ParseError("track needs at least two rows");

  bool closed = false;
  if (closed_directive) {
    closed = *closed_directive;
  } else {
    const auto& a = samples.front();
    const auto& b = samples.back();
    const double gap = std::hypot(a.x - b.x, a.y - b.y);
    closed = gap > 0.0 && gap <= TrackDefinition::kMaxSpacing;
  }
  return TrackDefinition(std::move(samples), closed);
}

TrackDefinition load_track(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open track file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_track(buffer.str());
}

std::string format_track(const TrackDefinition& track) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "# closed: " << (track.closed() ? "true" : "false") << '\n';
  out << kHeader << '\n';
  for (const auto& r : track.samples()) {
    out << r.s << ',' << r.x << ',' << r.y << ',' << r.psi << ',' << r.kappa << ',' << r.n_min << ','
        << r.n_max << ',' << r.n_raceline << ',' << r.v_raceline << '\n';
  }
  return out.str();
}

void save_track(const TrackDefinition& track, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write track file " + path.string());
  out << format_track(track);
}

}  // namespace racemode
