#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace mtts::core {

// Regularly sampled continuous signal: value n lives at t0 + n*dt.
struct ContinuousSeries {
    double t0 = 0.0;
    double dt = 1.0;
    std::vector<double> values;

    double time_at(std::size_t n) const { return t0 + static_cast<double>(n) * dt; }
    double last_time() const { return time_at(values.empty() ? 0 : values.size() - 1); }
};

struct Event {
    double time = 0.0;
    int type = 0;
};

// Irregular typed event stream; times strictly increasing.
struct EventSequence {
    std::vector<Event> events;
};

// One bimodal sequence plus its generation provenance.
struct MttsRecord {
    std::string id;
    ContinuousSeries cont;
    EventSequence events;
    double i_ec = 0.0;
    double i_ce = 0.0;
    std::uint64_t seed = 0;
    int k_event_types = 2;  // K; bound for event type ids
};

struct DatasetManifest {
    int version = 1;
    std::string split;  // "train" or "test"
    int k_event_types = 2;
    std::int64_t record_count = 0;
    std::pair<int, int> grid_shape{1, 1};
};

struct Dataset {
    DatasetManifest manifest;
    std::vector<MttsRecord> records;
};

// Returns human-readable invariant violations; empty means valid.
std::vector<std::string> validate_record(const MttsRecord& record);

// JSON-lines serialization. Field order is fixed:
// id, i_ec, i_ce, seed, t0, dt, cont, events. Reals use 17 significant
// digits so the decode(encode(r)) round trip is bit-exact.
std::string encode_record(const MttsRecord& record);
MttsRecord decode_record(const std::string& line, int k_event_types);

std::string encode_manifest(const DatasetManifest& manifest);
DatasetManifest decode_manifest(const std::string& text);

// Directory layout: <dir>/manifest.json + <dir>/records.jsonl.
void write_dataset(const std::string& dir, const Dataset& dataset);
Dataset read_dataset(const std::string& dir);

}  // namespace mtts::core
