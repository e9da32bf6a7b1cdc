#pragma once

#include <mref/core/color.hpp>
#include <mref/core/error.hpp>
#include <mref/core/image.hpp>
#include <mref/core/ledger.hpp>
#include <mref/core/parallel.hpp>
#include <mref/core/png_io.hpp>
#include <mref/core/resize.hpp>
#include <mref/core/tensor_io.hpp>
#include <mref/features/extractor.hpp>
#include <mref/metrics/quality.hpp>
#include <mref/metrics/texture.hpp>
#include <mref/partition.hpp>
#include <mref/similarity/hierarchy.hpp>
#include <mref/similarity/kernels.hpp>
#include <mref/similarity/levels.hpp>
#include <mref/similarity/match_field.hpp>
#include <mref/similarity/oracle.hpp>
#include <mref/similarity/reference_source.hpp>
#include <mref/transfer/synthesis.hpp>
