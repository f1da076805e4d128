#pragma once

#include "octex/csv.hpp"
#include "octex/dicom.hpp"
#include "octex/error.hpp"
#include "octex/eval.hpp"
#include "octex/extract.hpp"
#include "octex/field.hpp"
#include "octex/geometry.hpp"
#include "octex/grammar.hpp"
#include "octex/layout.hpp"
#include "octex/qc.hpp"
#include "octex/synth.hpp"
#include "octex/templates.hpp"
#include "octex/token_stream.hpp"
