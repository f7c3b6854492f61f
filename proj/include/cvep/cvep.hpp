#pragma once

#include "cvep/archive.hpp"
#include "cvep/cca.hpp"
#include "cvep/codegen.hpp"
#include "cvep/covariance.hpp"
#include "cvep/encoding.hpp"
#include "cvep/error.hpp"
#include "cvep/evaluation.hpp"
#include "cvep/outcome.hpp"
#include "cvep/session.hpp"
#include "cvep/sigproc.hpp"
#include "cvep/simulator.hpp"
#include "cvep/types.hpp"
#include "cvep/umm.hpp"
