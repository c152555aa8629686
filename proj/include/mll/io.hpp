#pragma once

#include <filesystem>
#include <string>

#include "mll/matrix.hpp"
#include "mll/train.hpp"

namespace mll::io {

// CSV: one sample per line, d comma-separated values, %.17g (round-trip safe).
void write_matrix_csv(const std::filesystem::path& path, const Matrix& m);
Matrix read_matrix_csv(const std::filesystem::path& path);

// Binary block: magic "MLL1", then n and d as little-endian 64-bit counts,
// then n*d little-endian IEEE 754 doubles, row-major.
void write_matrix_binary(const std::filesystem::path& path, const Matrix& m);
Matrix read_matrix_binary(const std::filesystem::path& path);

// Dispatch on the magic bytes: binary when present, CSV otherwise.
Matrix read_matrix_auto(const std::filesystem::path& path);

// One integer per line; read side infers num_classes = max label + 1.
void write_labels(const std::filesystem::path& path, const LabelVector& y);
LabelVector read_labels(const std::filesystem::path& path);

// Header epoch,loss_total,loss_tight,loss_contrast,companion_loss,recall_at_1;
// companion_loss is left empty when the run has no companion.
void write_trace_csv(const std::filesystem::path& path, const TrainTrace& t);
TrainTrace read_trace_csv(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace mll::io
