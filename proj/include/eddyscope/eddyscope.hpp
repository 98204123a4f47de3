#pragma once

#include "eddyscope/config.hpp"
#include "eddyscope/cpt_recovery.hpp"
#include "eddyscope/dictionary.hpp"
#include "eddyscope/errors.hpp"
#include "eddyscope/forward_model.hpp"
#include "eddyscope/io/atomic_file.hpp"
#include "eddyscope/io/json_io.hpp"
#include "eddyscope/io/msr_file.hpp"
#include "eddyscope/localization.hpp"
#include "eddyscope/parallel.hpp"
#include "eddyscope/solver/cpt_solver.hpp"
#include "eddyscope/solver/gmres.hpp"
#include "eddyscope/solver/newton_potential.hpp"
#include "eddyscope/solver/voxel.hpp"
#include "eddyscope/tensor_core.hpp"
