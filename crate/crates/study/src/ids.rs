use cxrkit_core::string_id;

string_id!(
    /// A reader study.
    StudyId
);
string_id!(
    /// A junior radiologist taking part in the study.
    ReaderId
);
string_id!(
    /// A senior radiologist allowed to sign and release reports.
    ReviewerId
);
string_id!(
    /// One reader's timed reading of one case.
    SessionId
);
string_id!(
    /// A blinded evaluation batch.
    BatchId
);
