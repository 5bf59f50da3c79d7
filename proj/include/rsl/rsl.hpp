#pragma once

#include "rsl/error.hpp"
#include "rsl/core.hpp"
#include "rsl/csv.hpp"
#include "rsl/ingestion.hpp"
#include "rsl/basis.hpp"
#include "rsl/graph.hpp"
#include "rsl/models.hpp"
#include "rsl/sampler.hpp"
#include "rsl/diagnostics.hpp"
#include "rsl/posterior.hpp"
#include "rsl/fit.hpp"
#include "rsl/io.hpp"
