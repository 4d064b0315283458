// SPDX-License-Identifier: Apache-2.0
#pragma once

// Per-task adapter persistence and the continual protocol: train tasks
// sequentially against one frozen base, store adapter-only checkpoints, and
// evaluate any past task by reloading its adapters.
//
// Checkpoint container (little-endian):
//   magic "CLRG" | u16 version (=1) | 32-byte fingerprint | u16 rank |
//   f64 alpha_fc | f64 alpha_conv | u32 entry count | entries
// entry: u16 name length | UTF-8 name | u8 dtype (0 = f32) | u8 ndim |
//   u32 extents[ndim] | raw f32 data
//
// The fingerprint field binds a checkpoint to the architecture it was built
// for (SHA-256 of the ArchSpec serialization). The registry manifest
// additionally records the base-weights fingerprint, and cross-checks the
// header metadata of every checkpoint it loads.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "colora/adapters.hpp"
#include "colora/arch.hpp"
#include "colora/common.hpp"
#include "colora/networks.hpp"

namespace colora {

inline constexpr uint16_t kCheckpointVersion = 1;

void save_adapter_checkpoint(const std::string& path, const AdapterSet& set);
AdapterSet load_adapter_checkpoint(const std::string& path, const ArchSpec& arch);

// Base weights travel in the same container with entry names "base/<name>",
// rank 0 and zero alphas.
void save_base_checkpoint(const std::string& path, GeneratorWeights& weights, const ArchSpec& arch);
GeneratorWeights load_base_checkpoint(const std::string& path, const ArchSpec& arch);

struct TaskRecord {
    std::string task_id;
    std::string checkpoint_rel;
    int rank = 1;
    double alpha_fc = 0.0;
    double alpha_conv = 0.0;
    double l_st = 0.0;
    std::string created_utc;
    double fid_at_train = 0.0;
    double diversity_at_train = 0.0;
};

// Directory-backed registry: a tab-separated manifest plus one checkpoint
// per task. Manifest updates are write-temp-then-rename; mutations take an
// advisory flock on <dir>/.lock.
class Registry {
public:
    static Registry create(const std::filesystem::path& dir, const Digest& base_fingerprint,
                           const std::string& base_checkpoint_rel);
    static Registry open(const std::filesystem::path& dir);

    const std::filesystem::path& dir() const { return dir_; }
    const Digest& base_fingerprint() const { return base_fingerprint_; }
    const std::string& base_checkpoint_rel() const { return base_checkpoint_rel_; }
    const std::vector<TaskRecord>& records() const { return records_; }
    const TaskRecord* find(const std::string& task_id) const;

    // Persists the adapter set under meta.task_id and appends the record.
    // Fails on duplicate ids without touching the manifest.
    void add_task(const AdapterSet& set, TaskRecord meta);

    // Loads a stored task and cross-verifies the checkpoint header against
    // the manifest record (rank and exact alpha bits).
    AdapterSet load_task(const std::string& task_id, const ArchSpec& arch) const;

private:
    Registry() = default;
    void write_manifest() const;

    std::filesystem::path dir_;
    Digest base_fingerprint_{};
    std::string base_checkpoint_rel_;
    std::vector<TaskRecord> records_;
};

}  // namespace colora
