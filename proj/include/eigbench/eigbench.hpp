#pragma once

#include "eigbench/backend.hpp"
#include "eigbench/conformance.hpp"
#include "eigbench/core.hpp"
#include "eigbench/dataset.hpp"
#include "eigbench/eig.hpp"
#include "eigbench/experiment.hpp"
#include "eigbench/heatmap.hpp"
#include "eigbench/pnm.hpp"
#include "eigbench/protocol.hpp"
#include "eigbench/simulation.hpp"
#include "eigbench/synthetic.hpp"
#include "eigbench/validation.hpp"
