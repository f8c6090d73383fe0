#include "mtts/core.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mtts/common.hpp"
#include "json.hpp"

namespace mtts::core {

namespace {

std::string fmt_real(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

bool finite(double v) { return std::isfinite(v); }

const nlohmann::json& require_key(const nlohmann::json& obj, const char* key) {
    auto it = obj.find(key);
    if (it == obj.end())
        throw ParseError(std::string("missing key \"") + key + "\"");
    return *it;
}

}  // namespace

std::vector<std::string> validate_record(const MttsRecord& r) {
    std::vector<std::string> out;
    if (!(r.cont.dt > 0.0)) out.push_back("dt not positive");
    if (r.cont.values.empty()) out.push_back("cont values empty");
    for (double v : r.cont.values)
        if (!finite(v)) {
            out.push_back("cont value not finite");
            break;
        }
    if (!finite(r.cont.t0)) out.push_back("t0 not finite");
    if (!(r.i_ec >= 0.0 && r.i_ec <= 1.0)) out.push_back("i_ec out of [0,1]");
    if (!(r.i_ce >= 0.0 && r.i_ce <= 1.0)) out.push_back("i_ce out of [0,1]");

    double prev = -1.0;
    bool increasing = true, finite_ok = true, nonneg = true, in_range = true;
    for (const Event& e : r.events.events) {
        if (!finite(e.time)) finite_ok = false;
        if (e.time < 0.0) nonneg = false;
        if (!(e.time > prev)) increasing = false;
        prev = e.time;
        if (e.type < 0 || e.type >= r.k_event_types) in_range = false;
    }
    if (!increasing) out.push_back("event times not strictly increasing");
    if (!finite_ok) out.push_back("event time not finite");
    if (!nonneg) out.push_back("event time negative");
    if (!in_range) out.push_back("event type id out of [0,K)");
    if (!r.cont.values.empty() && !r.events.events.empty() &&
        r.events.events.back().time > r.cont.last_time())
        out.push_back("event time past last continuous timestamp");
    return out;
}

std::string encode_record(const MttsRecord& r) {
    auto violations = validate_record(r);
    if (!violations.empty()) {
        std::string msg = "refusing to encode invalid record:";
        for (const auto& v : violations) msg += " " + v + ";";
        throw ConfigError(msg);
    }
    std::ostringstream os;
    os << "{\"id\":" << nlohmann::json(r.id).dump();
    os << ",\"i_ec\":" << fmt_real(r.i_ec);
    os << ",\"i_ce\":" << fmt_real(r.i_ce);
    os << ",\"seed\":" << r.seed;
    os << ",\"t0\":" << fmt_real(r.cont.t0);
    os << ",\"dt\":" << fmt_real(r.cont.dt);
    os << ",\"cont\":[";
    for (std::size_t i = 0; i < r.cont.values.size(); ++i) {
        if (i) os << ',';
        os << fmt_real(r.cont.values[i]);
    }
    os << "],\"events\":[";
    for (std::size_t i = 0; i < r.events.events.size(); ++i) {
        if (i) os << ',';
        os << '[' << fmt_real(r.events.events[i].time) << ','
           << r.events.events[i].type << ']';
    }
    os << "]}";
    return os.str();
}

MttsRecord decode_record(const std::string& line, int k_event_types) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("record parse error at byte ") +
                         std::to_string(e.byte) + ": " + e.what());
    }
    MttsRecord r;
    r.k_event_types = k_event_types;
    try {
        r.id = require_key(j, "id").get<std::string>();
        r.i_ec = require_key(j, "i_ec").get<double>();
        r.i_ce = require_key(j, "i_ce").get<double>();
        r.seed = require_key(j, "seed").get<std::uint64_t>();
        r.cont.t0 = require_key(j, "t0").get<double>();
        r.cont.dt = require_key(j, "dt").get<double>();
        r.cont.values = require_key(j, "cont").get<std::vector<double>>();
        for (const auto& ev : require_key(j, "events")) {
            if (!ev.is_array() || ev.size() != 2)
                throw ParseError("event entry is not a [time, typeid] pair");
            r.events.events.push_back(
                {ev[0].get<double>(), ev[1].get<int>()});
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("record field error: ") + e.what());
    }
    auto violations = validate_record(r);
    if (!violations.empty()) {
        std::string msg = "decoded record violates invariants:";
        for (const auto& v : violations) msg += " " + v + ";";
        throw ConfigError(msg);
    }
    return r;
}

std::string encode_manifest(const DatasetManifest& m) {
    nlohmann::ordered_json j;
    j["version"] = m.version;
    j["split"] = m.split;
    j["k_event_types"] = m.k_event_types;
    j["record_count"] = m.record_count;
    j["grid_shape"] = {m.grid_shape.first, m.grid_shape.second};
    return j.dump();
}

DatasetManifest decode_manifest(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("manifest parse error at byte ") +
                         std::to_string(e.byte) + ": " + e.what());
    }
    DatasetManifest m;
    m.version = require_key(j, "version").get<int>();
    if (m.version != 1)
        throw ConfigError("unsupported manifest version " +
                          std::to_string(m.version));
    m.split = require_key(j, "split").get<std::string>();
    m.k_event_types = require_key(j, "k_event_types").get<int>();
    m.record_count = require_key(j, "record_count").get<std::int64_t>();
    auto gs = require_key(j, "grid_shape");
    if (!gs.is_array() || gs.size() != 2)
        throw ParseError("grid_shape is not a pair");
    m.grid_shape = {gs[0].get<int>(), gs[1].get<int>()};
    return m;
}

void write_dataset(const std::string& dir, const Dataset& ds) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    {
        std::ofstream mf(fs::path(dir) / "manifest.json", std::ios::binary);
        mf << encode_manifest(ds.manifest) << '\n';
    }
    std::ofstream rf(fs::path(dir) / "records.jsonl", std::ios::binary);
    for (const auto& r : ds.records) rf << encode_record(r) << '\n';
}

Dataset read_dataset(const std::string& dir) {
    namespace fs = std::filesystem;
    const fs::path mpath = fs::path(dir) / "manifest.json";
    const fs::path rpath = fs::path(dir) / "records.jsonl";
    if (!fs::exists(mpath) || !fs::exists(rpath))
        throw MissingInputError("dataset not found at " + dir);
    Dataset ds;
    {
        std::ifstream mf(mpath, std::ios::binary);
        std::stringstream buf;
        buf << mf.rdbuf();
        ds.manifest = decode_manifest(buf.str());
    }
    std::ifstream rf(rpath, std::ios::binary);
    std::string line;
    while (std::getline(rf, line)) {
        if (line.empty()) continue;
        ds.records.push_back(decode_record(line, ds.manifest.k_event_types));
    }
    if (static_cast<std::int64_t>(ds.records.size()) != ds.manifest.record_count)
        throw ConfigError("manifest record_count does not match records.jsonl");
    return ds;
}

}  // namespace mtts::core
