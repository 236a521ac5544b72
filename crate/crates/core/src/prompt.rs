//! Prompt templates for the generation chain.
//!
//! Each template is kept exactly as it is sent to the model, including its
//! output slot. Rendering fills the input slot and drops the output slot so
//! the prompt ends on the `Output:` cue.

use alloc::string::String;
use core::fmt;
use core::str::FromStr;

use crate::{Error, Result};

pub const DIRECT_GENERATION: &str = "\
Task Overview: Given the attributes of a positive item, generate contrasting negative attributes following the same structure as the positive item. The generated attributes should be semantically similar but different from the positive item.

Input: {Positive Attributes}

Output: {Negative Attributes}
";

pub const DESCRIPTION_GENERATION: &str = "\
Task Overview:
You are a descriptive writer who excels at capturing the essence and details of items in clear language. Generate natural, detailed description of the item shown in the given image.

Input:
{Item Image}

Output:
{Item Description}
";

pub const ATTRIBUTE_MASKING: &str = "\
Task Overview:
Transform the given item description by masking key feature words with [MASK].

Instructions:
- Analyze the given item description.
- Identify most significant words that represent (1) Core features (2) Distinctive characteristics (3) Key specifications
- Replace these words with [MASK].
- Only output the masked description.

Input:
{Item Description}

Output:
{Masked Description}
";

pub const ATTRIBUTE_COMPLETION: &str = "\
Task Overview:
Complete the masked product description by filling in the missing words marked with [MASK].

Instructions:
- Analyze the given masked product description.
- Identify the possible words that can be used to complete the masked description.
- Replace the [MASK] tokens with the appropriate words.
- Ensure that the completed description is coherent and meaningful.
- Only the completed description is output.

Input:
{Masked Description}

Output:
{Generated Description}
";

pub const SLOT_ITEM_IMAGE: &str = "Item Image";
pub const SLOT_ITEM_DESCRIPTION: &str = "Item Description";
pub const SLOT_MASKED_DESCRIPTION: &str = "Masked Description";
pub const SLOT_POSITIVE_ATTRIBUTES: &str = "Positive Attributes";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum TemplateId {
    Direct,
    Describe,
    Mask,
    Complete,
}

impl TemplateId {
    pub const ALL: [TemplateId; 4] = [TemplateId::Direct, TemplateId::Describe, TemplateId::Mask, TemplateId::Complete];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::Direct => "direct",
            TemplateId::Describe => "describe",
            TemplateId::Mask => "mask",
            TemplateId::Complete => "complete",
        }
    }

    pub fn template(self) -> PromptTemplate {
        match self {
            TemplateId::Direct => PromptTemplate {
                id: self,
                text: DIRECT_GENERATION,
                input_slot: SLOT_POSITIVE_ATTRIBUTES,
                output_slot: "Negative Attributes",
            },
            TemplateId::Describe => PromptTemplate {
                id: self,
                text: DESCRIPTION_GENERATION,
                input_slot: SLOT_ITEM_IMAGE,
                output_slot: "Item Description",
            },
            TemplateId::Mask => PromptTemplate {
                id: self,
                text: ATTRIBUTE_MASKING,
                input_slot: SLOT_ITEM_DESCRIPTION,
                output_slot: "Masked Description",
            },
            TemplateId::Complete => PromptTemplate {
                id: self,
                text: ATTRIBUTE_COMPLETION,
                input_slot: SLOT_MASKED_DESCRIPTION,
                output_slot: "Generated Description",
            },
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TemplateId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TemplateId::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(alloc::format!("unknown template `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PromptTemplate {
    pub id: TemplateId,
    pub text: &'static str,
    pub input_slot: &'static str,
    pub output_slot: &'static str,
}

impl PromptTemplate {
    /// Fills the input slot from `slots` (name, value) and removes the
    /// output slot marker. Values are inserted verbatim and never rescanned.
    pub fn render(&self, slots: &[(&str, &str)]) -> Result<String> {
        let value = slots
            .iter()
            .find(|(name, _)| *name == self.input_slot)
            .map(|(_, v)| *v)
            .filter(|v| !v.trim().is_empty())
            .ok_or(Error::MissingSlot { template: self.id.as_str(), slot: self.input_slot })?;
        let input_marker = alloc::format!("{{{}}}", self.input_slot);
        let output_marker = alloc::format!("{{{}}}", self.output_slot);
        let mut out = String::with_capacity(self.text.len() + value.len());
        let mut rest = self.text;
        while let Some(pos) = rest.find('{') {
            out.push_str(&rest[..pos]);
            let tail = &rest[pos..];
            if tail.starts_with(&input_marker) {
                out.push_str(value);
                rest = &tail[input_marker.len()..];
            } else if tail.starts_with(&output_marker) {
                while out.ends_with(' ') {
                    out.pop();
                }
                rest = &tail[output_marker.len()..];
                if out.ends_with('\n') && rest.starts_with('\n') {
                    rest = &rest[1..];
                }
            } else {
                out.push('{');
                rest = &tail[1..];
            }
        }
        out.push_str(rest);
        Ok(out)
    }
}

pub fn render_prompt(id: TemplateId, slots: &[(&str, &str)]) -> Result<String> {
    id.template().render(slots)
}
